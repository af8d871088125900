//! Two-dimensional histograms of node features and the node → cell map.
//!
//! Rows bucket the first (x) feature and columns the second (y) feature.
//! Cell `(row, col)` covers `[row, row + 1) × [col, col + 1)` in histogram
//! coordinates, so the grid starts at the truncation corner `(0, 0)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureTable;

pub const HISTOGRAM_SCHEMA: &str = "eaglemine.histogram/1";

/// How one axis is bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "lowercase")]
pub enum Binning {
    /// `bins_per_decade` bins per factor of `base`. Values below `v_min`
    /// (including zero) fall into bin 0; when `v_min` is unset the smallest
    /// positive observed value is used.
    Log { base: f64, bins_per_decade: u32, v_min: Option<f64> },
    /// `bins` equal-width bins over the observed range.
    Linear { bins: u32, min: Option<f64>, max: Option<f64> },
    /// Values are already cell indices.
    Index,
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Log { base: 10.0, bins_per_decade: 10, v_min: None }
    }
}

/// Tolerance absorbing rounding in `log` at exact bin boundaries.
const EDGE_EPS: f64 = 1e-9;

fn log_position(value: f64, base: f64, bins_per_decade: u32) -> f64 {
    let l = if base == 10.0 {
        value.log10()
    } else if base == 2.0 {
        value.log2()
    } else {
        value.ln() / base.ln()
    };
    bins_per_decade as f64 * l
}

/// Bin index of `value` under logarithmic binning anchored at `v_min`.
pub fn log_bucketize(value: f64, base: f64, bins_per_decade: u32, v_min: f64) -> Result<usize> {
    if !(value >= 0.0) {
        return Err(Error::Domain(format!("cannot bucketize negative value {value}")));
    }
    if !(base > 1.0) || bins_per_decade == 0 || !(v_min > 0.0) {
        return Err(Error::Invalid(format!(
            "bad log binning (base {base}, {bins_per_decade} bins per decade, v_min {v_min})"
        )));
    }
    let origin = (log_position(v_min, base, bins_per_decade) + EDGE_EPS).floor();
    let pos = (log_position(value.max(v_min), base, bins_per_decade) + EDGE_EPS).floor();
    Ok((pos - origin) as usize)
}

/// A bucketed axis with its resolved parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub feature: String,
    pub binning: Binning,
    /// `bins + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    /// All observed values fell into one bin.
    pub degenerate: bool,
}

impl Axis {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    fn resolve(feature: &str, binning: Binning, values: &[f64]) -> Result<(Self, Vec<usize>)> {
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("feature `{feature}` has invalid value {bad}")));
        }
        let (binning, idx, edges): (Binning, Vec<usize>, Vec<f64>) = match binning {
            Binning::Log { base, bins_per_decade, v_min } => {
                let v_min = v_min.or_else(|| {
                    values.iter().copied().filter(|&v| v > 0.0).min_by(f64::total_cmp)
                });
                let v_min = v_min.unwrap_or(1.0);
                let idx = values
                    .iter()
                    .map(|&v| log_bucketize(v, base, bins_per_decade, v_min))
                    .collect::<Result<Vec<_>>>()?;
                let bins = idx.iter().max().map_or(1, |m| m + 1);
                let origin = (log_position(v_min, base, bins_per_decade) + EDGE_EPS).floor();
                let edges = (0..=bins)
                    .map(|k| base.powf((origin + k as f64) / bins_per_decade as f64))
                    .collect();
                (Binning::Log { base, bins_per_decade, v_min: Some(v_min) }, idx, edges)
            }
            Binning::Linear { bins, min, max } => {
                let bins = bins.max(1);
                let lo = min.unwrap_or_else(|| values.iter().copied().fold(f64::INFINITY, f64::min));
                let hi = max.unwrap_or_else(|| values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                let (lo, hi) = if values.is_empty() { (0.0, 1.0) } else { (lo, hi) };
                let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
                let idx: Vec<usize> = values
                    .iter()
                    .map(|&v| (((v - lo) / width).floor().max(0.0) as usize).min(bins as usize - 1))
                    .collect();
                let used = if hi > lo { bins as usize } else { 1 };
                let edges = (0..=used).map(|k| lo + k as f64 * width).collect();
                (Binning::Linear { bins, min: Some(lo), max: Some(hi) }, idx, edges)
            }
            Binning::Index => {
                let idx: Vec<usize> = values.iter().map(|&v| v.floor() as usize).collect();
                let bins = idx.iter().max().map_or(1, |m| m + 1);
                (Binning::Index, idx, (0..=bins).map(|k| k as f64).collect())
            }
        };
        let degenerate = edges.len() == 2;
        if degenerate {
            log::warn!("feature `{feature}` collapses to a single bin");
        }
        Ok((Self { feature: feature.to_string(), binning, edges, degenerate }, idx))
    }

    fn index_axis(bins: usize) -> Self {
        Self {
            feature: String::new(),
            binning: Binning::Index,
            edges: (0..=bins).map(|k| k as f64).collect(),
            degenerate: bins == 1,
        }
    }
}

/// Cell coordinate `(row, col)`.
pub type Cell = (usize, usize);

/// Dense grid of cell heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    rows: usize,
    cols: usize,
    heights: Vec<u64>,
    pub x: Axis,
    pub y: Axis,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    rows: usize,
    cols: usize,
    x: Axis,
    y: Axis,
}

impl Histogram {
    /// Builds a histogram directly from cell heights (synthetic data,
    /// tests). Axes are plain cell indices.
    pub fn from_heights(rows: usize, cols: usize, heights: Vec<u64>) -> Self {
        assert_eq!(heights.len(), rows * cols, "height grid has wrong size");
        Self { rows, cols, heights, x: Axis::index_axis(rows), y: Axis::index_axis(cols) }
    }

    pub fn from_cells(rows: usize, cols: usize, cells: impl IntoIterator<Item = (Cell, u64)>) -> Self {
        let mut heights = vec![0; rows * cols];
        for ((r, c), h) in cells {
            heights[r * cols + c] += h;
        }
        Self::from_heights(rows, cols, heights)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn height(&self, (r, c): Cell) -> u64 {
        self.heights[r * self.cols + c]
    }

    /// Height, or 0 outside the grid.
    pub fn height_or_zero(&self, r: isize, c: isize) -> u64 {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            0
        } else {
            self.heights[r as usize * self.cols + c as usize]
        }
    }

    pub fn heights(&self) -> &[u64] {
        &self.heights
    }

    pub fn total(&self) -> u64 {
        self.heights.iter().sum()
    }

    pub fn max_height(&self) -> u64 {
        self.heights.iter().copied().max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.max_height() == 0
    }

    /// Non-empty cells in row-major order.
    pub fn nonempty(&self) -> impl Iterator<Item = (Cell, u64)> + '_ {
        self.heights
            .iter()
            .enumerate()
            .filter(|(_, &h)| h > 0)
            .map(|(i, &h)| ((i / self.cols, i % self.cols), h))
    }

    pub fn nonempty_count(&self) -> usize {
        self.heights.iter().filter(|&&h| h > 0).count()
    }

    /// Header, then `row,col,height` for each non-empty cell.
    pub fn to_text(&self) -> String {
        let header = Header {
            schema: HISTOGRAM_SCHEMA.to_string(),
            rows: self.rows,
            cols: self.cols,
            x: self.x.clone(),
            y: self.y.clone(),
        };
        let mut out = format!("# {HISTOGRAM_SCHEMA}\n# {}\nrow,col,height\n", serde_json::to_string(&header).unwrap());
        for ((r, c), h) in self.nonempty() {
            let _ = writeln!(out, "{r},{c},{h}");
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let schema = lines.next().unwrap_or("").trim_start_matches('#').trim();
        if schema != HISTOGRAM_SCHEMA {
            return Err(Error::Schema { found: schema.to_string(), expected: HISTOGRAM_SCHEMA.into() });
        }
        let header_line = lines.next().ok_or(Error::Parse { line: 2, message: "missing header".into() })?;
        let header: Header = serde_json::from_str(header_line.trim_start_matches('#').trim())?;
        let mut heights = vec![0u64; header.rows * header.cols];
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 3;
            if line.trim().is_empty() || line.starts_with('#') || line == "row,col,height" {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<u64> {
                s.and_then(|s| s.trim().parse().ok()).ok_or(Error::Parse {
                    line: lineno,
                    message: format!("bad cell record `{line}`"),
                })
            };
            let mut f = line.split(',');
            let (r, c, h) = (parse(f.next())? as usize, parse(f.next())? as usize, parse(f.next())?);
            if r >= header.rows || c >= header.cols {
                return Err(Error::Parse { line: lineno, message: format!("cell ({r}, {c}) outside grid") });
            }
            heights[r * header.cols + c] = h;
        }
        Ok(Self { rows: header.rows, cols: header.cols, heights, x: header.x, y: header.y })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Node → cell assignment kept alongside a histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub nodes: Vec<String>,
    pub cells: Vec<Option<Cell>>,
}

impl CellMap {
    /// Recomputes heights from the map alone.
    pub fn tally(&self, rows: usize, cols: usize) -> Vec<u64> {
        let mut h = vec![0; rows * cols];
        for &(r, c) in self.cells.iter().flatten() {
            h[r * cols + c] += 1;
        }
        h
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("node_id\trow\tcol\n");
        for (node, cell) in self.nodes.iter().zip(&self.cells) {
            match cell {
                Some((r, c)) => {
                    let _ = writeln!(out, "{node}\t{r}\t{c}");
                }
                None => {
                    let _ = writeln!(out, "{node}\tNA\tNA");
                }
            }
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut cells = Vec::new();
        let lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        for (idx, line) in lines.skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Parse { line: idx + 1, message: "expected node_id, row, col".into() });
            }
            nodes.push(f[0].to_string());
            cells.push(match (f[1].parse::<usize>(), f[2].parse::<usize>()) {
                (Ok(r), Ok(c)) => Some((r, c)),
                _ if f[1] == "NA" => None,
                _ => return Err(Error::Parse { line: idx + 1, message: format!("bad cell `{line}`") }),
            });
        }
        Ok(Self { nodes, cells })
    }
}

/// Buckets features `x` and `y` of every node into a histogram.
pub fn build_histogram(
    table: &FeatureTable,
    x: &str,
    y: &str,
    x_binning: Binning,
    y_binning: Binning,
) -> Result<(Histogram, CellMap)> {
    let (x_axis, xi) = Axis::resolve(x, x_binning, table.column(x)?)?;
    let (y_axis, yi) = Axis::resolve(y, y_binning, table.column(y)?)?;
    let rows = x_axis.bins();
    let cols = y_axis.bins();
    let cells: Vec<Option<Cell>> = xi.iter().zip(&yi).map(|(&r, &c)| Some((r, c))).collect();
    let heights = cells
        .par_chunks(1 << 14)
        .fold(
            || vec![0u64; rows * cols],
            |mut acc, chunk| {
                for &(r, c) in chunk.iter().flatten() {
                    acc[r * cols + c] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; rows * cols],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let hist = Histogram { rows, cols, heights, x: x_axis, y: y_axis };
    Ok((hist, CellMap { nodes: table.nodes().to_vec(), cells }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(f64, f64)]) -> FeatureTable {
        let mut t = FeatureTable::new((0..rows.len()).map(|i| i.to_string()).collect());
        t.push_column("a", rows.iter().map(|r| r.0).collect()).unwrap();
        t.push_column("b", rows.iter().map(|r| r.1).collect()).unwrap();
        t
    }

    fn decades() -> Binning {
        Binning::Log { base: 10.0, bins_per_decade: 1, v_min: None }
    }

    #[test]
    fn bucketize_examples() {
        assert_eq!(log_bucketize(0.0, 10.0, 1, 1.0).unwrap(), 0);
        let bins: Vec<_> = [1.0, 10.0, 100.0].iter().map(|&v| log_bucketize(v, 10.0, 1, 1.0).unwrap()).collect();
        assert_eq!(bins, [0, 1, 2]);
        // floor(5 · log10 3) = floor(2.385…)
        assert_eq!(log_bucketize(3.0, 10.0, 5, 1.0).unwrap(), 2);
        assert!(matches!(log_bucketize(-1.0, 10.0, 5, 1.0), Err(Error::Domain(_))));
        // non-decimal bases go through ln/ln and still land exact powers
        assert_eq!(log_bucketize(8.0, 2.0, 1, 1.0).unwrap(), 3);
        assert_eq!(log_bucketize(125.0, 5.0, 1, 1.0).unwrap(), 3);
    }

    #[test]
    fn identical_nodes_give_single_cell() {
        let (h, map) = build_histogram(&table(&[(1.0, 1.0); 4]), "a", "b", decades(), decades()).unwrap();
        assert_eq!((h.rows(), h.cols()), (1, 1));
        assert_eq!(h.height((0, 0)), 4);
        assert!(h.x.degenerate && h.y.degenerate);
        assert_eq!(map.cells, vec![Some((0, 0)); 4]);
    }

    #[test]
    fn decade_binning_places_far_nodes() {
        let (h, _) = build_histogram(&table(&[(1.0, 1.0), (100.0, 100.0)]), "a", "b", decades(), decades()).unwrap();
        assert_eq!((h.rows(), h.cols()), (3, 3));
        assert_eq!(h.height((0, 0)), 1);
        assert_eq!(h.height((2, 2)), 1);
        assert_eq!(h.total(), 2);
        assert!(h.x.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zeros_share_bin_zero() {
        let (h, map) = build_histogram(&table(&[(0.0, 5.0), (2.0, 50.0)]), "a", "b", decades(), decades()).unwrap();
        assert_eq!(map.cells[0], Some((0, 0)));
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn text_roundtrip() {
        let (h, map) = build_histogram(&table(&[(1.0, 3.0), (7.0, 30.0), (7.0, 31.0)]), "a", "b", Binning::default(), Binning::default()).unwrap();
        let back = Histogram::parse_text(&h.to_text()).unwrap();
        assert_eq!(back, h);
        assert_eq!(CellMap::parse_tsv(&map.to_tsv()).unwrap(), map);
    }

    #[test]
    fn stale_schema_is_refused() {
        let err = Histogram::parse_text("# eaglemine-histogram/0\n{}\n").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn linear_binning() {
        let b = Binning::Linear { bins: 4, min: None, max: None };
        let (h, map) = build_histogram(&table(&[(0.0, 0.0), (1.0, 4.0), (2.0, 8.0)]), "a", "b", b, b).unwrap();
        assert_eq!((h.rows(), h.cols()), (4, 4));
        assert_eq!(map.cells, [Some((0, 0)), Some((2, 2)), Some((3, 3))]);
    }
}
