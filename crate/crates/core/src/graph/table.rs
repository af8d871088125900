use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{degrees, hubness_authority, pagerank, triangles, Direction, Graph, Side};
use crate::error::{Error, Result};

/// Per-node feature values, one named column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    nodes: Vec<String>,
    columns: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn new(nodes: Vec<String>) -> Self {
        Self { nodes, columns: Vec::new() }
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.nodes.len() {
            return Err(Error::Invalid(format!(
                "column `{name}` has {} values for {} nodes",
                values.len(),
                self.nodes.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("feature `{name}` has invalid value {bad}")));
        }
        self.columns.push((name, values));
        Ok(())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    }

    /// Computes the named features for the nodes of `side`.
    ///
    /// Recognised names: `degree`, `in_degree`, `out_degree`, `pagerank`,
    /// `hubness`, `authority`, `triangles`.
    pub fn compute(g: &Graph, side: Side, features: &[&str]) -> Result<Self> {
        let range = g.side_range(side);
        let nodes = g.labels()[range.clone()].to_vec();
        let mut table = Self::new(nodes);
        let mut hits = None;
        for &name in features {
            let full = match name {
                "degree" => degrees(g, Direction::Total),
                "in_degree" => degrees(g, Direction::In),
                "out_degree" => degrees(g, Direction::Out),
                "pagerank" => pagerank(g, 0.85, 1e-10, 200)?.scores,
                "triangles" => triangles(g)?,
                "hubness" | "authority" => {
                    let h = hits.get_or_insert_with(|| hubness_authority(g, 1e-10, 1000));
                    if name == "hubness" { h.hub.clone() } else { h.authority.clone() }
                }
                other => return Err(Error::Invalid(format!("unknown feature `{other}`"))),
            };
            // power iteration leaves ~1e-17 negatives on zero entries
            let values = full[range.clone()].iter().map(|v| v.max(0.0)).collect();
            table.push_column(name, values)?;
        }
        Ok(table)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("node_id");
        for (name, _) in &self.columns {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (i, node) in self.nodes.iter().enumerate() {
            out.push_str(node);
            for (_, col) in &self.columns {
                let _ = write!(out, "\t{}", col[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let names: Vec<&str> = header.split('\t').skip(1).collect();
        let mut nodes = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != names.len() + 1 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, got {}", names.len() + 1, fields.len()),
                });
            }
            nodes.push(fields[0].to_string());
            for (c, f) in fields[1..].iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number `{f}`"),
                })?;
                cols[c].push(v);
            }
        }
        let mut table = Self::new(nodes);
        for (name, col) in names.into_iter().zip(cols) {
            table.push_column(name, col)?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
