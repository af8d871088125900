//! Quasi-Newton minimisation with Armijo backtracking.

pub const DIM: usize = 5;
pub type Vector = [f64; DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iters: usize,
    /// Stop once the gradient 2-norm falls below this.
    pub grad_tol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self { max_iters: 500, grad_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vector,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The objective was not finite at the start point; `x` is the start.
    pub diverged: bool,
}

fn dot(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &Vector) -> f64 {
    dot(a, a).sqrt()
}

fn identity() -> [Vector; DIM] {
    let mut m = [[0.0; DIM]; DIM];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Minimises `f`, which returns the value and gradient at a point.
/// Non-finite values are treated as outside the feasible region.
pub fn minimize(f: impl Fn(&Vector) -> (f64, Vector), x0: Vector, cfg: &BfgsConfig) -> BfgsResult {
    let (mut fx, mut g) = f(&x0);
    if !fx.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return BfgsResult { x: x0, value: fx, iterations: 0, converged: false, diverged: true };
    }
    let mut x = x0;
    let mut hinv = identity();
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        if norm(&g) < cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut p = [0.0; DIM];
        for i in 0..DIM {
            p[i] = -dot(&hinv[i], &g);
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            hinv = identity();
            fresh = true;
            p = g.map(|v| -v);
            slope = -dot(&g, &g);
        }
        // keep the first trial step within a unit box in parameter space
        let longest = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut t = if longest > 1.0 { 1.0 / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn = x;
            for i in 0..DIM {
                xn[i] += t * p[i];
            }
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && gn.iter().all(|v| v.is_finite()) && fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if fresh {
                // no descent possible along the gradient: numerically stationary
                converged = norm(&g) < cfg.grad_tol.sqrt();
                break;
            }
            hinv = identity();
            fresh = true;
            continue;
        };
        let mut s = [0.0; DIM];
        let mut y = [0.0; DIM];
        for i in 0..DIM {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv = identity().map(|row| row.map(|v| v * scale));
            }
            let rho = 1.0 / sy;
            let mut hy = [0.0; DIM];
            for i in 0..DIM {
                hy[i] = dot(&hinv[i], &y);
            }
            let yhy = dot(&y, &hy);
            for i in 0..DIM {
                for j in 0..DIM {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if improvement.abs() <= 1e-15 * fx.abs().max(1.0) && norm(&g) < cfg.grad_tol.sqrt() {
            converged = true;
            break;
        }
    }
    if !converged && norm(&g) < cfg.grad_tol {
        converged = true;
    }
    BfgsResult { x, value: fx, iterations, converged, diverged: false }
}
