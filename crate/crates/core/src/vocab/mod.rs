//! Distribution vocabulary: the single DTM Gaussian and the equal-weight
//! mixture of two, with fitting and evaluation.

pub mod dtm;
mod fit;
pub mod optim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dtm::{cell_probability, Dtm, DtmParams};
pub use fit::{
    estimate_n, fit, fit_mixture, fit_mixture_trace, fit_single, l1_optimal_n, log_likelihood, moment_estimate, objective, params_of,
    theta_of, CellSample, FitOptions, LogLikelihood, PROB_FLOOR,
};

use crate::error::{Error, Result};
use crate::histogram::Cell;
use crate::tree::IslandId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Single,
    Mixture2,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Single => "single",
            Kind::Mixture2 => "mixture2",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Kind::Single),
            "mixture2" => Ok(Kind::Mixture2),
            other => Err(Error::Invalid(format!("unknown vocabulary term `{other}`"))),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Warnings raised while fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitFlags {
    /// The optimiser could not start; parameters are the moment estimate.
    #[serde(default, skip_serializing_if = "is_false")]
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub unconverged: bool,
    /// A mixture component collapsed again after one reinitialisation.
    #[serde(default, skip_serializing_if = "is_false")]
    pub collapsed: bool,
    /// Some non-empty cell had probability below the floor.
    #[serde(default, skip_serializing_if = "is_false")]
    pub floored: bool,
}

/// A fitted vocabulary term describing one island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmModel {
    pub kind: Kind,
    pub components: Vec<DtmParams>,
    /// Number of samples (nodes) the model stands for.
    pub n: u64,
    pub island: IslandId,
    #[serde(default)]
    pub flags: FitFlags,
}

impl DtmModel {
    pub fn single(p: DtmParams, n: u64, island: IslandId) -> Self {
        Self { kind: Kind::Single, components: vec![p], n, island, flags: FitFlags::default() }
    }

    pub fn mixture(a: DtmParams, b: DtmParams, n: u64, island: IslandId) -> Self {
        Self { kind: Kind::Mixture2, components: vec![a, b], n, island, flags: FitFlags::default() }
    }

    pub fn evaluator(&self) -> Result<ModelEval> {
        let want = match self.kind {
            Kind::Single => 1,
            Kind::Mixture2 => 2,
        };
        if self.components.len() != want {
            return Err(Error::Invalid(format!(
                "{} model needs {want} components, has {}",
                self.kind,
                self.components.len()
            )));
        }
        let comps = self.components.iter().map(Dtm::new).collect::<Result<Vec<_>>>()?;
        Ok(ModelEval { comps })
    }
}

/// Cell probabilities of a model; mixtures weigh components equally.
#[derive(Debug, Clone)]
pub struct ModelEval {
    comps: Vec<Dtm>,
}

impl ModelEval {
    pub fn prob(&self, cell: Cell) -> f64 {
        self.comps.iter().map(|d| d.prob(cell)).sum::<f64>() / self.comps.len() as f64
    }

    pub fn components(&self) -> &[Dtm] {
        &self.comps
    }
}
