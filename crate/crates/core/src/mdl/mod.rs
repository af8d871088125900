//! Description length of a summary: parameter bits for every Gaussian
//! component plus signed Elias codes of the per-cell count residuals.

pub mod elias;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use elias::{decode_signed, encode_signed, signed_len, BitReader, BitWriter, EliasCode};

use crate::error::Result;
use crate::histogram::{Cell, Histogram};
use crate::mine::{window, Summary};
use crate::tree::IslandId;
use crate::vocab::{DtmModel, Kind};

/// Bits per stored float.
pub const FLOAT_BITS: u64 = 32;
/// Floats per Gaussian component (two means, three covariance entries).
pub const FLOATS_PER_COMPONENT: u64 = 5;

/// Bits of one summary model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBits {
    pub island: IslandId,
    pub kind: Kind,
    /// Sample count charged to each component.
    pub counts: Vec<u64>,
    /// Parameter and count bits of this model's components.
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlReport {
    pub code: EliasCode,
    pub float_bits: u64,
    pub floats_per_component: u64,
    /// Gaussian components over all models.
    pub components: usize,
    pub model_bits: u64,
    pub error_bits: u64,
    pub total: u64,
    /// Cells whose residual was coded.
    pub error_cells: usize,
    pub per_model: Vec<ModelBits>,
}

/// Counts charged to the components of `m`. A mixture's N is split
/// between its two equally weighted components, larger half first.
pub fn component_counts(m: &DtmModel) -> Vec<u64> {
    match m.kind {
        Kind::Single => vec![m.n],
        Kind::Mixture2 => vec![m.n.div_ceil(2), m.n / 2],
    }
}

fn component_bits(n: u64, code: EliasCode) -> u64 {
    FLOATS_PER_COMPONENT * FLOAT_BITS + signed_len(n as i64, code)
}

/// `ω(K) + Σᵢ (5·l_c + ω(Nᵢ))` over component counts `Nᵢ`.
pub fn model_bits(counts: &[u64], code: EliasCode) -> u64 {
    signed_len(counts.len() as i64, code) + counts.iter().map(|&n| component_bits(n, code)).sum::<u64>()
}

/// `Σ ω(ε)` over residuals.
pub fn error_bits(residuals: impl IntoIterator<Item = i64>, code: EliasCode) -> u64 {
    residuals.into_iter().map(|e| signed_len(e, code)).sum()
}

/// Description length of a finished summary.
pub fn summary_mdl(s: &Summary, h: &Histogram, code: EliasCode) -> Result<MdlReport> {
    let models: Vec<DtmModel> = s.models.iter().map(|r| r.model.clone()).collect();
    models_mdl(&models, h, code)
}

/// Description length of `h` under a set of models. The expected height
/// of a cell is `Σ Nᵢ·Pᵢ(g)` rounded half to even; residuals are coded on
/// every non-empty cell and on every empty cell expecting at least one.
pub fn models_mdl(models: &[DtmModel], h: &Histogram, code: EliasCode) -> Result<MdlReport> {
    let evals = models.iter().map(DtmModel::evaluator).collect::<Result<Vec<_>>>()?;
    let (rows, cols) = window(models, h);
    let expect = |cell: Cell| -> i64 {
        // Sorted so the sum does not depend on model order.
        let mut parts: Vec<f64> = evals.iter().zip(models).map(|(e, m)| m.n as f64 * e.prob(cell)).collect();
        parts.sort_by(f64::total_cmp);
        parts.iter().sum::<f64>().round_ties_even() as i64
    };
    let (error_bits, error_cells) = (0..rows)
        .into_par_iter()
        .map(|r| {
            let (mut bits, mut cells) = (0u64, 0usize);
            for c in 0..cols {
                let have = if r < h.rows() && c < h.cols() { h.height((r, c)) as i64 } else { 0 };
                let want = expect((r, c));
                if have > 0 || want > 0 {
                    bits += signed_len(have - want, code);
                    cells += 1;
                }
            }
            (bits, cells)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let per_model: Vec<ModelBits> = models
        .iter()
        .map(|m| {
            let counts = component_counts(m);
            let bits = counts.iter().map(|&n| component_bits(n, code)).sum();
            ModelBits { island: m.island, kind: m.kind, counts, bits }
        })
        .collect();
    let components: usize = per_model.iter().map(|m| m.counts.len()).sum();
    let model_bits = signed_len(components as i64, code) + per_model.iter().map(|m| m.bits).sum::<u64>();
    Ok(MdlReport {
        code,
        float_bits: FLOAT_BITS,
        floats_per_component: FLOATS_PER_COMPONENT,
        components,
        model_bits,
        error_bits,
        total: model_bits + error_bits,
        error_cells,
        per_model,
    })
}
