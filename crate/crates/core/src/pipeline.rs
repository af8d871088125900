//! End-to-end runs: input loading, mining, and the files written for a
//! run. Every text output starts with a `# <schema> config=<json>` line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureTable;
use crate::histogram::{build_histogram, Binning, CellMap, Histogram};
use crate::mdl::EliasCode;
use crate::mine::{mine, CellLabels, Label, MineConfig, MineEcho, Summary};
use crate::tree::{TreeConfig, WaterLevelTree};

pub const NODES_SCHEMA: &str = "eaglemine.nodes/1";
pub const CELLMAP_SCHEMA: &str = "eaglemine.cellmap/1";
pub const HEATMAP_SCHEMA: &str = "eaglemine.heatmap/1";
pub const LABELS_SCHEMA: &str = "eaglemine.labels/1";

pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.txt";
pub const CELLMAP_FILE: &str = "cellmap.tsv";
pub const NODES_FILE: &str = "nodes.tsv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Input {
    /// Feature TSV bucketed into a histogram on features `x` (rows) and
    /// `y` (columns). `tie` orders nodes of equal score.
    Features {
        path: PathBuf,
        x: String,
        y: String,
        x_binning: Binning,
        y_binning: Binning,
        tie: Option<String>,
    },
    /// A saved histogram, optionally with its node → cell map.
    Histogram { path: PathBuf, cellmap: Option<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEcho {
    pub step: Option<f64>,
    pub levels: usize,
}

impl Default for TreeEcho {
    fn default() -> Self {
        let t = TreeConfig::default();
        Self { step: t.step, levels: t.levels }
    }
}

impl From<&TreeEcho> for TreeConfig {
    fn from(e: &TreeEcho) -> Self {
        Self { step: e.step, levels: e.levels, ..TreeConfig::default() }
    }
}

/// Everything a run depends on; echoed into each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: Input,
    pub tree: TreeEcho,
    pub mine: MineEcho,
    pub code: EliasCode,
    pub out: PathBuf,
    pub export_plot: bool,
}

impl PipelineConfig {
    pub fn new(input: Input, out: impl Into<PathBuf>) -> Self {
        Self {
            input,
            tree: TreeEcho::default(),
            mine: MineEcho::from(&MineConfig::default()),
            code: EliasCode::default(),
            out: out.into(),
            export_plot: false,
        }
    }

    fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

/// Histogram plus whatever node-level data the input carries.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub histogram: Histogram,
    pub cellmap: Option<CellMap>,
    /// Tie-break values aligned with `cellmap.nodes`.
    pub tie: Option<(String, Vec<f64>)>,
}

pub fn load(input: &Input) -> Result<Loaded> {
    match input {
        Input::Features { path, x, y, x_binning, y_binning, tie } => {
            let table = FeatureTable::read(path)?;
            let (histogram, cellmap) = build_histogram(&table, x, y, *x_binning, *y_binning)?;
            let tie = match tie {
                Some(name) => Some((name.clone(), table.column(name)?.to_vec())),
                None => None,
            };
            Ok(Loaded { histogram, cellmap: Some(cellmap), tie })
        }
        Input::Histogram { path, cellmap } => {
            let histogram = Histogram::read(path)?;
            let cellmap = match cellmap {
                Some(p) => Some(CellMap::parse_tsv(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?),
                None => None,
            };
            Ok(Loaded { histogram, cellmap, tie: None })
        }
    }
}

/// One node's place in the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScore {
    pub node: String,
    pub label: Label,
    pub score: f64,
    pub tie: f64,
}

/// Nodes by descending score, then descending tie value, then id.
/// Nodes without a cell are left out.
pub fn rank_nodes(
    summary: &Summary,
    h: &Histogram,
    cellmap: &CellMap,
    tie: Option<&[f64]>,
) -> Result<Vec<NodeScore>> {
    let labels = summary.cell_labels()?;
    let mut out = Vec::with_capacity(cellmap.nodes.len());
    for (i, (node, cell)) in cellmap.nodes.iter().zip(&cellmap.cells).enumerate() {
        let Some(cell) = *cell else { continue };
        if cell.0 >= h.rows() || cell.1 >= h.cols() {
            return Err(Error::Invalid(format!("node `{node}` maps outside the histogram")));
        }
        out.push(NodeScore {
            node: node.clone(),
            label: labels.get(cell),
            score: summary.cell_score(&labels, h, cell)?,
            tie: tie.map_or(0.0, |t| t[i]),
        });
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.tie.total_cmp(&a.tie))
            .then_with(|| a.node.cmp(&b.node))
    });
    Ok(out)
}

fn header(schema: &str, echo: &str) -> String {
    format!("# {schema} config={echo}\n")
}

pub fn nodes_tsv(nodes: &[NodeScore], tie_name: &str, echo: &str) -> String {
    let mut out = header(NODES_SCHEMA, echo);
    let _ = writeln!(out, "node_id\tlabel\tscore\t{tie_name}");
    for n in nodes {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", n.node, n.label, n.score, n.tie);
    }
    out
}

/// Reads a ranking written by a run.
pub fn read_nodes(path: &Path) -> Result<Vec<NodeScore>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let first = lines.next().map_or("", |(_, l)| l);
    let found = first.trim_start_matches('#').split_whitespace().next().unwrap_or("<missing>");
    if found != NODES_SCHEMA {
        return Err(Error::Schema { found: found.to_string(), expected: NODES_SCHEMA.to_string() });
    }
    let mut out = Vec::new();
    for (idx, line) in lines.skip(1) {
        let bad = |what: &str| Error::Parse { line: idx + 1, message: format!("bad {what} in `{line}`") };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("record"));
        }
        let label = match f[1] {
            "outlier" => Label::Outlier,
            "empty" => Label::Empty,
            s => Label::Model(s.parse().map_err(|_| bad("label"))?),
        };
        out.push(NodeScore {
            node: f[0].to_string(),
            label,
            score: f[2].parse().map_err(|_| bad("score"))?,
            tie: f[3].parse().map_err(|_| bad("tie value"))?,
        });
    }
    Ok(out)
}

fn heatmap_csv(h: &Histogram, echo: &str) -> String {
    let mut out = header(HEATMAP_SCHEMA, echo);
    out.push_str("row,col,height\n");
    for ((r, c), v) in h.nonempty() {
        let _ = writeln!(out, "{r},{c},{v}");
    }
    out
}

fn labels_csv(h: &Histogram, labels: &CellLabels, echo: &str) -> String {
    let mut out = header(LABELS_SCHEMA, echo);
    out.push_str("row,col,cluster\n");
    for (cell, _) in h.nonempty() {
        let _ = writeln!(out, "{},{},{}", cell.0, cell.1, labels.get(cell));
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Result of a full run.
#[derive(Debug)]
pub struct Run {
    pub summary: Summary,
    pub tree: WaterLevelTree,
    pub histogram: Histogram,
    pub nodes: Option<Vec<NodeScore>>,
    pub written: Vec<PathBuf>,
}

/// Loads the input, mines it and writes the run files into `cfg.out`.
pub fn run(cfg: &PipelineConfig) -> Result<Run> {
    let loaded = load(&cfg.input)?;
    let h = loaded.histogram;
    let mine_cfg = MineConfig::from(&cfg.mine);
    let (tree, mut summary) = mine(&h, &TreeConfig::from(&cfg.tree), &mine_cfg)?;
    summary.config = serde_json::to_value(cfg)?;

    let echo = cfg.echo();
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut written = vec![write(&cfg.out, SUMMARY_FILE, &summary.to_json())?];

    let text = h.to_text();
    let (head, body) = text.split_at(text.find("\nrow,col,height").map_or(text.len(), |i| i + 1));
    written.push(write(&cfg.out, HISTOGRAM_FILE, &format!("{head}# config={echo}\n{body}"))?);

    let nodes = match &loaded.cellmap {
        Some(map) => {
            written.push(write(&cfg.out, CELLMAP_FILE, &(header(CELLMAP_SCHEMA, &echo) + &map.to_tsv()))?);
            let (tie_name, tie) = match &loaded.tie {
                Some((name, v)) => (name.as_str(), Some(v.as_slice())),
                None => ("tie", None),
            };
            let ranked = rank_nodes(&summary, &h, map, tie)?;
            written.push(write(&cfg.out, NODES_FILE, &nodes_tsv(&ranked, tie_name, &echo))?);
            Some(ranked)
        }
        None => None,
    };

    if cfg.export_plot {
        let labels = summary.cell_labels()?;
        written.push(write(&cfg.out, HEATMAP_FILE, &heatmap_csv(&h, &echo))?);
        written.push(write(&cfg.out, LABELS_FILE, &labels_csv(&h, &labels, &echo))?);
    }
    Ok(Run { summary, tree, histogram: h, nodes, written })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Histogram;
    use crate::mine::LabelRun;

    fn toy() -> (Summary, Histogram, CellMap) {
        let h = Histogram::from_heights(1, 3, vec![2, 1, 0]);
        let s = Summary {
            schema: crate::mine::SUMMARY_SCHEMA.into(),
            config: serde_json::Value::Null,
            rows: 1,
            cols: 3,
            models: Vec::new(),
            main: None,
            main_fallback: false,
            suspiciousness: Vec::new(),
            labels: vec![LabelRun { label: Label::Outlier, len: 2 }, LabelRun { label: Label::Empty, len: 1 }],
            outliers: vec![(0, 0), (0, 1)],
            stitches: Vec::new(),
        };
        let map = CellMap {
            nodes: vec!["b".into(), "a".into(), "c".into(), "d".into()],
            cells: vec![Some((0, 0)), Some((0, 0)), Some((0, 1)), None],
        };
        (s, h, map)
    }

    #[test]
    fn ties_break_by_value_then_id() {
        let (s, h, map) = toy();
        let ranked = rank_nodes(&s, &h, &map, Some(&[1.0, 1.0, 5.0, 0.0])).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|n| n.node.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn nodes_roundtrip_and_schema_check() {
        let (s, h, map) = toy();
        let ranked = rank_nodes(&s, &h, &map, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.tsv");
        fs::write(&path, nodes_tsv(&ranked, "tie", "{}")).unwrap();
        assert_eq!(read_nodes(&path).unwrap(), ranked);

        fs::write(&path, "# eaglemine.nodes/0 config={}\nnode_id\tlabel\tscore\ttie\n").unwrap();
        assert!(matches!(read_nodes(&path), Err(Error::Schema { .. })));
    }
}
