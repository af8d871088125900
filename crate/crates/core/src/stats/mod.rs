//! Normal distribution primitives and the Anderson–Darling normality test.

mod anderson_darling;
pub mod normal;

pub use anderson_darling::{anderson_darling, AdOutcome, CRITICAL_1PCT, MIN_SAMPLES};
