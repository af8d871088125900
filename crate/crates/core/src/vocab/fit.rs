use serde::{Deserialize, Serialize};

use super::dtm::{Dtm, DtmParams};
use super::optim::{minimize, BfgsConfig, Vector};
use super::{DtmModel, FitFlags, Kind};
use crate::error::{Error, Result};
use crate::histogram::{Cell, Histogram};
use crate::tree::{Island, IslandId};

/// Probability floor used inside logarithms.
pub const PROB_FLOOR: f64 = 1e-300;
/// Component covariance determinant below which a mixture component has
/// collapsed onto too few cells.
const COLLAPSE_DET: f64 = 1e-6;

/// Cells of an island with their heights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellSample {
    pub cells: Vec<Cell>,
    pub heights: Vec<u64>,
}

impl CellSample {
    pub fn new(cells: Vec<Cell>, heights: Vec<u64>) -> Self {
        assert_eq!(cells.len(), heights.len(), "one height per cell");
        Self { cells, heights }
    }

    pub fn from_cells(cells: &[Cell], h: &Histogram) -> Self {
        Self { cells: cells.to_vec(), heights: cells.iter().map(|&c| h.height(c)).collect() }
    }

    /// Core and expansion ring of an island.
    pub fn from_island(island: &Island, h: &Histogram) -> Self {
        let cells: Vec<Cell> = island.all_cells().collect();
        Self::from_cells(&cells, h)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.heights.iter().sum()
    }

    fn weights(&self) -> Vec<f64> {
        self.heights.iter().map(|&h| h as f64).collect()
    }

    fn check(&self) -> Result<()> {
        let positive = self.heights.iter().filter(|&&h| h > 0).count();
        if positive < 3 {
            return Err(Error::Degenerate(format!("{positive} cells with positive mass, need at least 3")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub bfgs: BfgsConfig,
    pub em_max_iters: usize,
    /// Relative log-likelihood gain below which EM stops.
    pub em_tol: f64,
    /// Optimiser iterations per M-step.
    pub m_step_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { bfgs: BfgsConfig::default(), em_max_iters: 200, em_tol: 1e-8, m_step_iters: 50 }
    }
}

/// Unconstrained coordinates `(μ1, μ2, ln l11, l21, ln l22)`.
pub fn theta_of(p: &DtmParams) -> Option<Vector> {
    let [l11, l21, l22] = p.cholesky()?;
    Some([p.mu[0], p.mu[1], l11.ln(), l21, l22.ln()])
}

pub fn params_of(t: &Vector) -> DtmParams {
    DtmParams::from_cholesky([t[0], t[1]], [t[2].exp(), t[3], t[4].exp()])
}

/// Weighted mean negative log-likelihood `−Σ w log P / Σ w` and its
/// gradient in the unconstrained coordinates. Infinite where the
/// parameters are unusable.
pub fn objective(cells: &[Cell], weights: &[f64], theta: &Vector) -> (f64, Vector) {
    let p = params_of(theta);
    let Ok(d) = Dtm::new(&p) else {
        return (f64::INFINITY, [0.0; 5]);
    };
    let total: f64 = weights.iter().sum();
    let mut value = 0.0;
    let mut gs = [0.0; 5];
    for (&cell, &w) in cells.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let (prob, g) = d.prob_grad(cell);
        value -= w * prob.max(PROB_FLOOR).ln();
        for k in 0..5 {
            gs[k] -= w * g[k];
        }
    }
    let [s11, s12, _] = p.sigma;
    let l11 = theta[2].exp();
    let l22 = theta[4].exp();
    let grad = [
        gs[0],
        gs[1],
        gs[2] * 2.0 * s11 + gs[3] * s12,
        gs[3] * l11 + gs[4] * 2.0 * theta[3],
        gs[4] * 2.0 * l22 * l22,
    ];
    (value / total, grad.map(|g| g / total))
}

/// Weighted mean and covariance of cell centres, plus the 1/12 variance
/// of a uniform spread within each unit cell.
fn moments(cells: &[Cell], weights: &[f64]) -> Option<DtmParams> {
    let w: f64 = weights.iter().sum();
    if !(w > 0.0) {
        return None;
    }
    let mut m = [0.0; 2];
    for (&(r, c), &wi) in cells.iter().zip(weights) {
        m[0] += wi * (r as f64 + 0.5);
        m[1] += wi * (c as f64 + 0.5);
    }
    m = m.map(|v| v / w);
    let mut s = [0.0; 3];
    for (&(r, c), &wi) in cells.iter().zip(weights) {
        let (dx, dy) = (r as f64 + 0.5 - m[0], c as f64 + 0.5 - m[1]);
        s[0] += wi * dx * dx;
        s[1] += wi * dx * dy;
        s[2] += wi * dy * dy;
    }
    s = s.map(|v| v / w);
    s[0] += 1.0 / 12.0;
    s[2] += 1.0 / 12.0;
    Some(DtmParams::new(m, s))
}

/// Height-weighted moment estimate used to start the optimiser.
pub fn moment_estimate(s: &CellSample) -> Option<DtmParams> {
    moments(&s.cells, &s.weights())
}

struct Fitted {
    params: DtmParams,
    diverged: bool,
    converged: bool,
}

fn fit_weighted(cells: &[Cell], weights: &[f64], start: &DtmParams, cfg: &BfgsConfig) -> Fitted {
    let Some(t0) = theta_of(start) else {
        return Fitted { params: *start, diverged: true, converged: false };
    };
    let r = minimize(|t| objective(cells, weights, t), t0, cfg);
    if r.diverged {
        log::warn!("optimizer could not start; keeping the moment estimate");
    } else if !r.converged {
        log::debug!("optimizer stopped after {} iterations without meeting the gradient tolerance", r.iterations);
    }
    Fitted { params: params_of(&r.x), diverged: r.diverged, converged: r.converged }
}

/// Maximum-likelihood single DTM Gaussian for the island cells.
pub fn fit_single(s: &CellSample, island: IslandId, opts: &FitOptions) -> Result<DtmModel> {
    s.check()?;
    let w = s.weights();
    let init = moments(&s.cells, &w).expect("positive mass checked");
    let f = fit_weighted(&s.cells, &w, &init, &opts.bfgs);
    let mut model = DtmModel {
        kind: Kind::Single,
        components: vec![f.params],
        n: estimate_n(s),
        island,
        flags: FitFlags { diverged: f.diverged, unconverged: !f.converged && !f.diverged, ..FitFlags::default() },
    };
    model.flags.floored = log_likelihood(&model, s)?.floored > 0;
    Ok(model)
}

/// Start points for the two components: the cells split by the sign of
/// their projection on the major axis.
fn split_start(cells: &[Cell], w: &[f64]) -> [DtmParams; 2] {
    let all = moments(cells, w).expect("positive mass checked");
    let [a, b, c] = all.sigma;
    let half = (a - c) / 2.0;
    let disc = (half * half + b * b).sqrt();
    let lambda = (a + c) / 2.0 + disc;
    let v = if b.abs() > 1e-12 * (a + c) {
        let (x, y) = (b, lambda - a);
        let n = (x * x + y * y).sqrt();
        [x / n, y / n]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let mut sides = [Vec::new(), Vec::new()];
    for (&(r, col), &wi) in cells.iter().zip(w) {
        let proj = (r as f64 + 0.5 - all.mu[0]) * v[0] + (col as f64 + 0.5 - all.mu[1]) * v[1];
        let k = usize::from(proj >= 0.0);
        sides[k].push(((r, col), wi));
    }
    let shift = lambda.sqrt() / 2.0;
    let mut out = [all; 2];
    for (k, side) in sides.iter().enumerate() {
        let (cs, ws): (Vec<Cell>, Vec<f64>) = side.iter().copied().unzip();
        out[k] = match moments(&cs, &ws) {
            Some(p) if p.cholesky().is_some() && Dtm::new(&p).is_ok() => p,
            _ => {
                let sign = if k == 0 { -1.0 } else { 1.0 };
                DtmParams::new([all.mu[0] + sign * shift * v[0], all.mu[1] + sign * shift * v[1]], all.sigma)
            }
        };
    }
    out
}

fn mixture_loglik(comps: &[Dtm; 2], s: &CellSample) -> (f64, Vec<[f64; 2]>) {
    let mut ll = 0.0;
    let mut probs = Vec::with_capacity(s.len());
    for (&cell, &h) in s.cells.iter().zip(&s.heights) {
        let p = [comps[0].prob(cell), comps[1].prob(cell)];
        ll += h as f64 * (0.5 * (p[0] + p[1])).max(PROB_FLOOR).ln();
        probs.push(p);
    }
    (ll, probs)
}

/// Equal-weight two-component DTM Gaussian mixture by EM. Also returns
/// the log-likelihood after every E-step.
pub fn fit_mixture_trace(s: &CellSample, island: IslandId, opts: &FitOptions) -> Result<(DtmModel, Vec<f64>)> {
    s.check()?;
    let w = s.weights();
    let mut params = split_start(&s.cells, &w);
    let mut flags = FitFlags::default();
    let mut reinitialised = false;
    let mut trace = Vec::new();
    let m_cfg = BfgsConfig { max_iters: opts.m_step_iters, grad_tol: opts.bfgs.grad_tol };
    let mut unconverged = true;
    for _ in 0..opts.em_max_iters {
        let comps = [Dtm::new(&params[0])?, Dtm::new(&params[1])?];
        let (ll, probs) = mixture_loglik(&comps, s);
        if let Some(&prev) = trace.last() {
            if ll - prev <= opts.em_tol * ll.abs().max(1.0) {
                trace.push(ll);
                unconverged = false;
                break;
            }
        }
        trace.push(ll);
        let mut next = params;
        for k in 0..2 {
            let wk: Vec<f64> = probs
                .iter()
                .zip(&w)
                .map(|(p, &h)| {
                    let tot = p[0] + p[1];
                    h * if tot > 0.0 { p[k] / tot } else { 0.5 }
                })
                .collect();
            if wk.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let f = fit_weighted(&s.cells, &wk, &params[k], &m_cfg);
            flags.diverged |= f.diverged;
            next[k] = f.params;
        }
        let collapsed = next.iter().position(|p| p.det() < COLLAPSE_DET);
        if let Some(k) = collapsed {
            if reinitialised {
                log::warn!("mixture component collapsed twice on island {island}");
                flags.collapsed = true;
                unconverged = false;
                break;
            }
            reinitialised = true;
            let start = split_start(&s.cells, &w);
            next[k] = start[k];
            trace.clear();
        }
        params = next;
    }
    if unconverged {
        log::debug!("mixture EM on island {island} hit the iteration cap");
        flags.unconverged = true;
    }
    // two copies of the single fit are a member of the mixture family;
    // EM from the axis split can stall below it on unimodal data
    let single = fit_single(s, island, opts)?;
    let (em_ll, _) = mixture_loglik(&[Dtm::new(&params[0])?, Dtm::new(&params[1])?], s);
    let single_ll = log_likelihood(&single, s)?.value;
    if single_ll > em_ll {
        params = [single.components[0]; 2];
        flags = single.flags;
        trace.push(single_ll);
    }
    params.sort_by(|a, b| a.mu[0].total_cmp(&b.mu[0]).then(a.mu[1].total_cmp(&b.mu[1])));
    let mut model = DtmModel { kind: Kind::Mixture2, components: params.to_vec(), n: estimate_n(s), island, flags };
    model.flags.floored = log_likelihood(&model, s)?.floored > 0;
    Ok((model, trace))
}

pub fn fit_mixture(s: &CellSample, island: IslandId, opts: &FitOptions) -> Result<DtmModel> {
    fit_mixture_trace(s, island, opts).map(|(m, _)| m)
}

/// Fits the vocabulary term `kind`.
pub fn fit(kind: Kind, s: &CellSample, island: IslandId, opts: &FitOptions) -> Result<DtmModel> {
    match kind {
        Kind::Single => fit_single(s, island, opts),
        Kind::Mixture2 => fit_mixture(s, island, opts),
    }
}

/// Number of samples a model stands for: the island's total height.
pub fn estimate_n(s: &CellSample) -> u64 {
    s.total()
}

/// The integer N ≥ 1 minimising `Σ_g |N·P(g) − h_g|`, kept as a
/// diagnostic next to [`estimate_n`].
pub fn l1_optimal_n(model: &DtmModel, s: &CellSample) -> Result<u64> {
    let eval = model.evaluator()?;
    let pairs: Vec<(f64, f64)> = s.cells.iter().zip(&s.heights).map(|(&c, &h)| (eval.prob(c), h as f64)).collect();
    let cost = |n: f64| pairs.iter().map(|&(p, h)| (n * p - h).abs()).sum::<f64>();
    // weighted median of h/P with weights P
    let mut ratios: Vec<(f64, f64)> = pairs.iter().filter(|(p, _)| *p > 0.0).map(|&(p, h)| (h / p, p)).collect();
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = ratios.iter().map(|r| r.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    let mut median = 1.0;
    for &(r, p) in &ratios {
        acc += p;
        if acc >= half {
            median = r;
            break;
        }
    }
    let lo = median.floor().max(1.0);
    let hi = median.ceil().max(1.0);
    let n = if cost(hi) < cost(lo) { hi } else { lo };
    let n = n as u64;
    log::debug!("island {}: training size {}, L1-optimal N {n}", model.island, s.total());
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// Cells with positive height whose probability hit the floor.
    pub floored: usize,
}

/// `Σ_g h_g log P(g)` over the sample cells.
pub fn log_likelihood(model: &DtmModel, s: &CellSample) -> Result<LogLikelihood> {
    let eval = model.evaluator()?;
    let mut value = 0.0;
    let mut floored = 0;
    for (&c, &h) in s.cells.iter().zip(&s.heights) {
        if h == 0 {
            continue;
        }
        let p = eval.prob(c);
        if p < PROB_FLOOR {
            floored += 1;
        }
        value += h as f64 * p.max(PROB_FLOOR).ln();
    }
    Ok(LogLikelihood { value, floored })
}
