use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shape::{island_shape_test, ShapeTestResult};
use super::MineConfig;
use crate::error::{Error, Result};
use crate::histogram::{Cell, Histogram};
use crate::tree::{IslandId, WaterLevelTree, ROOT};
use crate::vocab::{fit, fit_single, log_likelihood, CellSample, DtmModel, Kind};

fn is_false(b: &bool) -> bool {
    !*b
}

/// A model in the summary together with the cells it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: DtmModel,
    /// Log-likelihood of the model on its own cells.
    pub loglik: f64,
    /// The island failed the shape test but had no children to descend to.
    #[serde(default, skip_serializing_if = "is_false")]
    pub forced: bool,
    /// Too few cells for the shape test; accepted untested.
    #[serde(default, skip_serializing_if = "is_false")]
    pub too_small: bool,
    /// Islands merged into this model by stitching, including its own.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stitched: Vec<IslandId>,
    #[serde(with = "super::summary::cell_runs")]
    pub cells: Vec<Cell>,
}

impl ModelRecord {
    pub fn kind(&self) -> Kind {
        self.model.kind
    }

    pub fn island(&self) -> IslandId {
        self.model.island
    }

    fn bbox(&self) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, 0, usize::MAX, 0);
        for &(r, c) in &self.cells {
            b = (b.0.min(r), b.1.max(r), b.2.min(c), b.3.max(c));
        }
        b
    }
}

/// The term each island is described by. Along the chain of
/// largest-mass children starting at the largest level-0 island, islands
/// get the mixture; all others get the single Gaussian. A root without
/// children is itself the mixture.
pub fn assign_vocabulary_terms(t: &WaterLevelTree) -> BTreeMap<IslandId, Kind> {
    let mut terms: BTreeMap<IslandId, Kind> = t.islands().map(|i| (i.id, Kind::Single)).collect();
    let heaviest = |id: IslandId| {
        t.get(id).children.iter().copied().max_by(|&a, &b| t.get(a).mass.cmp(&t.get(b).mass).then(b.cmp(&a)))
    };
    let mut cur = if t.root().is_leaf() { Some(ROOT) } else { heaviest(ROOT) };
    while let Some(id) = cur {
        terms.insert(id, Kind::Mixture2);
        cur = heaviest(id);
    }
    terms
}

struct Tested {
    model: DtmModel,
    shape: ShapeTestResult,
    loglik: f64,
    cells: Vec<Cell>,
}

fn fit_and_test(mut cells: Vec<Cell>, kind: Kind, island: IslandId, h: &Histogram, cfg: &MineConfig) -> Result<Tested> {
    cells.sort_unstable();
    let sample = CellSample::from_cells(&cells, h);
    let model = fit(kind, &sample, island, &cfg.fit)?;
    let shape = island_shape_test(&cells, &model, cfg.critical)?;
    let loglik = log_likelihood(&model, &sample)?.value;
    Ok(Tested { model, shape, loglik, cells })
}

fn record(t: Tested, forced: bool) -> ModelRecord {
    ModelRecord {
        too_small: t.shape.too_small(),
        model: t.model,
        loglik: t.loglik,
        forced,
        stitched: Vec::new(),
        cells: t.cells,
    }
}

/// Breadth-first search for islands whose fitted term passes the shape
/// test. Rejected islands hand over to their children; rejected leaves
/// are kept and flagged `forced`. Islands of one BFS frontier are fitted
/// in parallel; decisions follow island-id order.
pub fn search(
    t: &WaterLevelTree,
    h: &Histogram,
    terms: &BTreeMap<IslandId, Kind>,
    cfg: &MineConfig,
) -> Result<Vec<ModelRecord>> {
    let mut out = Vec::new();
    let mut queue: VecDeque<IslandId> =
        if t.root().is_leaf() { VecDeque::from([ROOT]) } else { t.root().children.iter().copied().collect() };
    while !queue.is_empty() {
        let frontier: Vec<IslandId> = queue.drain(..).collect();
        let results: Vec<Result<Tested>> = frontier
            .par_iter()
            .map(|&id| {
                let island = t.get(id);
                let kind = terms.get(&id).copied().unwrap_or(Kind::Single);
                fit_and_test(island.all_cells().collect(), kind, id, h, cfg)
            })
            .collect();
        for (id, res) in frontier.into_iter().zip(results) {
            let children = &t.get(id).children;
            match res {
                Ok(tested) if !tested.shape.rejected => out.push(record(tested, false)),
                Ok(tested) if children.is_empty() => out.push(record(tested, true)),
                Ok(_) => queue.extend(children.iter().copied()),
                Err(e) => {
                    log::warn!("island {id}: {e}");
                    queue.extend(children.iter().copied());
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Degenerate("degenerate histogram: no island could be described".into()));
    }
    Ok(out)
}

/// One applied merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchStep {
    pub islands: [IslandId; 2],
    /// Log-likelihood reduction per unit mass.
    pub cost: f64,
}

fn near(a: &ModelRecord, b: &ModelRecord, margin: usize) -> bool {
    let (a, b) = (a.bbox(), b.bbox());
    let overlaps = |lo1: usize, hi1: usize, lo2: usize, hi2: usize| lo1 <= hi2 + 2 * margin && lo2 <= hi1 + 2 * margin;
    overlaps(a.0, a.1, b.0, b.1) && overlaps(a.2, a.3, b.2, b.3)
}

fn try_merge(a: &ModelRecord, b: &ModelRecord, h: &Histogram, cfg: &MineConfig) -> Option<(f64, ModelRecord)> {
    let mut cells: Vec<Cell> = a.cells.iter().chain(&b.cells).copied().collect();
    cells.sort_unstable();
    cells.dedup();
    let island = a.island().min(b.island());
    let sample = CellSample::from_cells(&cells, h);
    let model = fit_single(&sample, island, &cfg.fit).ok()?;
    let shape = island_shape_test(&cells, &model, cfg.critical).ok()?;
    if shape.rejected {
        return None;
    }
    let loglik = log_likelihood(&model, &sample).ok()?.value;
    let mass = (a.model.n + b.model.n) as f64;
    let cost = (a.loglik + b.loglik - loglik) / mass;
    let mut stitched: Vec<IslandId> = [&a.stitched, &b.stitched]
        .iter()
        .zip([a.island(), b.island()])
        .flat_map(|(s, own)| if s.is_empty() { vec![own] } else { s.to_vec() })
        .collect();
    stitched.sort_unstable();
    let merged = ModelRecord {
        model,
        loglik,
        forced: false,
        too_small: shape.too_small(),
        stitched,
        cells,
    };
    Some((cost, merged))
}

/// Repeatedly merges the pair of nearby single-Gaussian models whose
/// merged fit passes the shape test with the least log-likelihood loss
/// per unit mass. The mixture model never takes part.
pub fn stitch(mut records: Vec<ModelRecord>, h: &Histogram, cfg: &MineConfig) -> (Vec<ModelRecord>, Vec<StitchStep>) {
    let mut uids: Vec<usize> = (0..records.len()).collect();
    let mut next_uid = records.len();
    let mut cache: HashMap<(usize, usize), Option<(f64, ModelRecord)>> = HashMap::new();
    let mut steps = Vec::new();
    loop {
        let pairs: Vec<(usize, usize)> = (0..records.len())
            .flat_map(|i| (i + 1..records.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                records[i].kind() == Kind::Single
                    && records[j].kind() == Kind::Single
                    && near(&records[i], &records[j], cfg.stitch_margin)
            })
            .collect();
        let fresh: Vec<(usize, usize)> =
            pairs.iter().copied().filter(|&(i, j)| !cache.contains_key(&(uids[i], uids[j]))).collect();
        let fitted: Vec<_> = fresh.par_iter().map(|&(i, j)| try_merge(&records[i], &records[j], h, cfg)).collect();
        for (&(i, j), r) in fresh.iter().zip(fitted) {
            cache.insert((uids[i], uids[j]), r);
        }
        let best = pairs
            .iter()
            .filter_map(|&(i, j)| cache[&(uids[i], uids[j])].as_ref().map(|(cost, _)| (*cost, i, j)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let Some((cost, i, j)) = best else {
            break;
        };
        let merged = cache[&(uids[i], uids[j])].as_ref().expect("admissible pair").1.clone();
        steps.push(StitchStep { islands: [records[i].island(), records[j].island()], cost });
        log::debug!("stitched islands {} and {} (cost {cost})", records[i].island(), records[j].island());
        records[i] = merged;
        uids[i] = next_uid;
        next_uid += 1;
        records.remove(j);
        uids.remove(j);
    }
    (records, steps)
}
