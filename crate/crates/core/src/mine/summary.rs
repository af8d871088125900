use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assign::{outlier_score, CellLabels, Label, LabelRun};
use super::search::{ModelRecord, StitchStep};
use crate::error::{Error, Result};
use crate::histogram::{Cell, Histogram};

pub const SUMMARY_SCHEMA: &str = "eaglemine.summary/1";

/// Cell lists stored as `[row, first_col, run]` triples.
pub(crate) mod cell_runs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::histogram::Cell;
    use crate::tree::{expand_runs, run_length};

    pub fn serialize<S: Serializer>(cells: &[Cell], s: S) -> Result<S::Ok, S::Error> {
        run_length(cells).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Cell>, D::Error> {
        Ok(expand_runs(&Vec::<[usize; 3]>::deserialize(d)?))
    }
}

/// The mined description of a histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    /// Configuration that produced the summary, echoed verbatim.
    pub config: serde_json::Value,
    pub rows: usize,
    pub cols: usize,
    pub models: Vec<ModelRecord>,
    /// Index of the main (mixture) model.
    pub main: Option<usize>,
    #[serde(default)]
    pub main_fallback: bool,
    pub suspiciousness: Vec<f64>,
    pub labels: Vec<LabelRun>,
    pub outliers: Vec<Cell>,
    #[serde(default)]
    pub stitches: Vec<StitchStep>,
}

impl Summary {
    pub fn cell_labels(&self) -> Result<CellLabels> {
        CellLabels::from_runs(self.rows, self.cols, &self.labels)
            .ok_or_else(|| Error::Invalid("label runs do not cover the grid".into()))
    }

    /// Suspiciousness of the nodes in `cell`: the score of the owning
    /// model, or the point-mass score for an outlier cell.
    pub fn cell_score(&self, labels: &CellLabels, h: &Histogram, cell: Cell) -> Result<f64> {
        Ok(match labels.get(cell) {
            Label::Model(i) => self.suspiciousness[i],
            Label::Outlier => match self.main {
                Some(m) => outlier_score(&self.models[m].model.evaluator()?, cell, h.height(cell)),
                None => 0.0,
            },
            Label::Empty => 0.0,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
        if found != SUMMARY_SCHEMA {
            return Err(Error::Schema { found: found.to_string(), expected: SUMMARY_SCHEMA.to_string() });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
