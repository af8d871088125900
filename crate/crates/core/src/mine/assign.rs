//! Cell labelling, outliers and suspiciousness.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::search::ModelRecord;
use crate::error::Result;
use crate::histogram::{Cell, Histogram};
use crate::vocab::{DtmModel, Kind, ModelEval, PROB_FLOOR};

/// Probability below which a model does not explain a cell.
pub const OUTLIER_PROB: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Model(usize),
    Outlier,
    Empty,
}

impl Label {
    pub fn model(self) -> Option<usize> {
        match self {
            Label::Model(i) => Some(i),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Model(i) => write!(f, "{i}"),
            Label::Outlier => f.write_str("outlier"),
            Label::Empty => f.write_str("empty"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Model(usize),
    Tag(String),
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Model(i) => LabelRepr::Model(*i),
            other => LabelRepr::Tag(other.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match LabelRepr::deserialize(d)? {
            LabelRepr::Model(i) => Ok(Label::Model(i)),
            LabelRepr::Tag(t) if t == "outlier" => Ok(Label::Outlier),
            LabelRepr::Tag(t) if t == "empty" => Ok(Label::Empty),
            LabelRepr::Tag(t) => Err(serde::de::Error::custom(format!("unknown cell label `{t}`"))),
        }
    }
}

/// One label per grid cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellLabels {
    rows: usize,
    cols: usize,
    labels: Vec<Label>,
}

/// `len` consecutive row-major cells sharing a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub label: Label,
    pub len: usize,
}

impl CellLabels {
    pub fn get(&self, (r, c): Cell) -> Label {
        self.labels[r * self.cols + c]
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, Label)> + '_ {
        self.labels.iter().enumerate().map(|(i, &l)| ((i / self.cols, i % self.cols), l))
    }

    pub fn outliers(&self) -> Vec<Cell> {
        self.iter().filter(|(_, l)| *l == Label::Outlier).map(|(c, _)| c).collect()
    }

    pub fn runs(&self) -> Vec<LabelRun> {
        let mut runs: Vec<LabelRun> = Vec::new();
        for &l in &self.labels {
            match runs.last_mut() {
                Some(run) if run.label == l => run.len += 1,
                _ => runs.push(LabelRun { label: l, len: 1 }),
            }
        }
        runs
    }

    pub fn from_runs(rows: usize, cols: usize, runs: &[LabelRun]) -> Option<Self> {
        let labels: Vec<Label> = runs.iter().flat_map(|r| std::iter::repeat_n(r.label, r.len)).collect();
        (labels.len() == rows * cols).then_some(Self { rows, cols, labels })
    }
}

fn evaluators(records: &[ModelRecord]) -> Result<Vec<ModelEval>> {
    records.iter().map(|r| r.model.evaluator()).collect()
}

/// Labels every non-empty cell with the model maximising `N·P(g)` among
/// models with `P(g) ≥ threshold` (ties to the lower index), or as an
/// outlier when no model reaches the threshold.
pub fn assign_cells(records: &[ModelRecord], h: &Histogram, threshold: f64) -> Result<CellLabels> {
    let evals = evaluators(records)?;
    let (rows, cols) = (h.rows(), h.cols());
    let labels: Vec<Label> = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let cell = (i / cols, i % cols);
            if h.height(cell) == 0 {
                return Label::Empty;
            }
            let mut best: Option<(f64, usize)> = None;
            for (k, (e, r)) in evals.iter().zip(records).enumerate() {
                let p = e.prob(cell);
                if p < threshold {
                    continue;
                }
                let score = r.model.n as f64 * p;
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, k));
                }
            }
            best.map_or(Label::Outlier, |(_, k)| Label::Model(k))
        })
        .collect();
    Ok(CellLabels { rows, cols, labels })
}

/// Per-model scores against the main model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suspiciousness {
    pub scores: Vec<f64>,
    pub main: usize,
    /// No mixture model was found; the largest-N model serves as main.
    pub fallback: bool,
}

/// Index of the mixture model, or of the model with the largest N when
/// there is none (second field set).
pub fn main_model(records: &[ModelRecord]) -> Option<(usize, bool)> {
    if let Some(i) = records.iter().position(|r| r.kind() == Kind::Mixture2) {
        return Some((i, false));
    }
    let i = records.iter().enumerate().max_by(|a, b| a.1.model.n.cmp(&b.1.model.n).then(b.0.cmp(&a.0)))?.0;
    Some((i, true))
}

/// Largest window a score is summed over, per axis.
const MAX_WINDOW: usize = 4096;

/// Cells summed over: the histogram grid together with an 8σ box around
/// every component, clipped to the positive quadrant.
pub(crate) fn window<'a>(models: impl IntoIterator<Item = &'a DtmModel>, h: &Histogram) -> (usize, usize) {
    let (mut rows, mut cols) = (h.rows(), h.cols());
    for p in models.into_iter().flat_map(|m| &m.components) {
        let r = (p.mu[0] + 8.0 * p.sigma[0].sqrt()).ceil();
        let c = (p.mu[1] + 8.0 * p.sigma[2].sqrt()).ceil();
        if r.is_finite() && r > 0.0 {
            rows = rows.max(r as usize);
        }
        if c.is_finite() && c > 0.0 {
            cols = cols.max(c as usize);
        }
    }
    if rows > MAX_WINDOW || cols > MAX_WINDOW {
        log::warn!("score window {rows}x{cols} capped at {MAX_WINDOW}");
    }
    (rows.min(MAX_WINDOW), cols.min(MAX_WINDOW))
}

/// Kullback–Leibler divergence of two cell distributions after
/// renormalising each within the window.
fn kl(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0 && sq > 0.0) {
        return 0.0;
    }
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let a = a / sp;
        if a > 0.0 {
            d += a * (a / (b / sq).max(PROB_FLOOR)).ln();
        }
    }
    d.max(0.0)
}

/// `N_i · KL(P_i ‖ P_main)` for every model; the main model scores 0.
pub fn suspiciousness(records: &[ModelRecord], h: &Histogram) -> Result<Suspiciousness> {
    let Some((main, fallback)) = main_model(records) else {
        return Ok(Suspiciousness { scores: Vec::new(), main: 0, fallback: false });
    };
    if fallback {
        log::warn!("no mixture model; scoring against the largest model");
    }
    let evals = evaluators(records)?;
    let (rows, cols) = window(records.iter().map(|r| &r.model), h);
    let cells: Vec<Cell> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    let grid = |e: &ModelEval| -> Vec<f64> { cells.par_iter().map(|&c| e.prob(c)).collect() };
    let q = grid(&evals[main]);
    let scores = evals
        .iter()
        .enumerate()
        .map(|(i, e)| if i == main { 0.0 } else { records[i].model.n as f64 * kl(&grid(e), &q) })
        .collect();
    Ok(Suspiciousness { scores, main, fallback })
}

/// Score of an outlier cell: its `h` nodes as a point mass measured
/// against the main model, `h · (−ln P_main(g))`.
pub fn outlier_score(main: &ModelEval, cell: Cell, height: u64) -> f64 {
    height as f64 * -main.prob(cell).max(PROB_FLOOR).ln()
}
