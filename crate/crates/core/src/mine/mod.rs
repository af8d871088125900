//! Describing a histogram with vocabulary terms: search over the tree,
//! stitching, cell labels and suspiciousness.

mod assign;
mod search;
pub mod shape;
mod summary;

use serde::{Deserialize, Serialize};

pub(crate) use assign::window;
pub use assign::{
    assign_cells, main_model, outlier_score, suspiciousness, CellLabels, Label, LabelRun, Suspiciousness,
    OUTLIER_PROB,
};
pub use search::{assign_vocabulary_terms, search, stitch, ModelRecord, StitchStep};
pub use shape::{island_shape_test, ShapeTestResult};
pub use summary::{Summary, SUMMARY_SCHEMA};

use crate::error::Result;
use crate::histogram::Histogram;
use crate::stats::CRITICAL_1PCT;
use crate::tree::{water_level_tree, TreeConfig, WaterLevelTree};
use crate::vocab::FitOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MineConfig {
    /// Critical value of the adjusted Anderson–Darling statistic.
    pub critical: f64,
    /// Cells below this probability under every model are outliers.
    pub outlier_prob: f64,
    /// Bounding boxes are grown by this many cells before the stitch
    /// proximity check.
    pub stitch_margin: usize,
    pub fit: FitOptions,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self { critical: CRITICAL_1PCT, outlier_prob: OUTLIER_PROB, stitch_margin: 2, fit: FitOptions::default() }
    }
}

/// Search, stitch, label and score over a refined tree.
pub fn summarize(t: &WaterLevelTree, h: &Histogram, cfg: &MineConfig) -> Result<Summary> {
    let terms = assign_vocabulary_terms(t);
    let found = search(t, h, &terms, cfg)?;
    let (models, stitches) = stitch(found, h, cfg);
    let labels = assign_cells(&models, h, cfg.outlier_prob)?;
    let susp = suspiciousness(&models, h)?;
    Ok(Summary {
        schema: SUMMARY_SCHEMA.to_string(),
        config: serde_json::Value::Null,
        rows: h.rows(),
        cols: h.cols(),
        main: Some(susp.main),
        main_fallback: susp.fallback,
        suspiciousness: susp.scores,
        outliers: labels.outliers(),
        labels: labels.runs(),
        models,
        stitches,
    })
}

/// Builds the tree and summarises `h`.
pub fn mine(h: &Histogram, tree: &TreeConfig, cfg: &MineConfig) -> Result<(WaterLevelTree, Summary)> {
    let t = water_level_tree(h, tree)?;
    let s = summarize(&t, h, cfg)?;
    Ok((t, s))
}

/// Model parameters that matter for reproducing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineEcho {
    pub critical: f64,
    pub outlier_prob: f64,
    pub stitch_margin: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub m_step_iters: usize,
}

impl From<&MineConfig> for MineEcho {
    fn from(c: &MineConfig) -> Self {
        Self {
            critical: c.critical,
            outlier_prob: c.outlier_prob,
            stitch_margin: c.stitch_margin,
            max_iters: c.fit.bfgs.max_iters,
            grad_tol: c.fit.bfgs.grad_tol,
            em_max_iters: c.fit.em_max_iters,
            em_tol: c.fit.em_tol,
            m_step_iters: c.fit.m_step_iters,
        }
    }
}

impl From<&MineEcho> for MineConfig {
    fn from(e: &MineEcho) -> Self {
        let mut fit = FitOptions::default();
        fit.bfgs.max_iters = e.max_iters;
        fit.bfgs.grad_tol = e.grad_tol;
        fit.em_max_iters = e.em_max_iters;
        fit.em_tol = e.em_tol;
        fit.m_step_iters = e.m_step_iters;
        Self { critical: e.critical, outlier_prob: e.outlier_prob, stitch_margin: e.stitch_margin, fit }
    }
}
