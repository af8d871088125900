//! Seeded generators for synthetic histograms and graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::graph::Graph;
use crate::histogram::{Cell, Histogram};
use crate::vocab::DtmParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `n` points from the Gaussian `p` restricted to the positive
/// quadrant, by rejection.
pub fn sample_truncated(p: &DtmParams, n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let [l11, l21, l22] = p.cholesky().expect("positive definite covariance");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let x = p.mu[0] + l11 * z1;
        let y = p.mu[1] + l21 * z1 + l22 * z2;
        if x >= 0.0 && y >= 0.0 {
            out.push((x, y));
        }
    }
    out
}

/// Counts points per unit cell; points beyond the grid are dropped.
pub fn histogram_of(points: &[(f64, f64)], rows: usize, cols: usize) -> Histogram {
    let mut heights = vec![0u64; rows * cols];
    for &(x, y) in points {
        let (r, c) = (x.floor() as usize, y.floor() as usize);
        if r < rows && c < cols {
            heights[r * cols + c] += 1;
        }
    }
    Histogram::from_heights(rows, cols, heights)
}

/// A histogram with known structure.
#[derive(Debug, Clone)]
pub struct Planted {
    pub histogram: Histogram,
    /// Components of the main region.
    pub main: [DtmParams; 2],
    pub blobs: Vec<DtmParams>,
    /// Non-empty cells receiving samples from each blob.
    pub blob_cells: Vec<Vec<Cell>>,
    pub outliers: Vec<Cell>,
}

pub const PLANTED_ROWS: usize = 90;
pub const PLANTED_COLS: usize = 90;

/// Main triangle-like region along both axes near the origin, made of
/// two overlapping Gaussians with 10⁵ samples each.
pub fn main_region() -> [DtmParams; 2] {
    [DtmParams::new([3.0, 6.0], [9.0, 2.0, 20.0]), DtmParams::new([8.0, 3.0], [20.0, 2.0, 9.0])]
}

const BLOB_SITES: [[f64; 2]; 3] = [[60.0, 18.0], [22.0, 62.0], [62.0, 62.0]];
const OUTLIER_SITES: [Cell; 4] = [(86, 2), (3, 86), (40, 42), (86, 86)];

/// Main region, `m` (1..=3) blobs of σ ≈ 2 with up to 5000 samples, and
/// four isolated outlier cells more than 6σ from every component.
pub fn planted(m: usize, seed: u64) -> Planted {
    assert!((1..=BLOB_SITES.len()).contains(&m), "between 1 and 3 blobs");
    let mut rng = rng(seed);
    let main = main_region();
    let mut points = sample_truncated(&main[0], 100_000, &mut rng);
    points.extend(sample_truncated(&main[1], 100_000, &mut rng));

    let mut blobs = Vec::new();
    let mut blob_points = Vec::new();
    for site in &BLOB_SITES[..m] {
        let jitter = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let s11: f64 = rng.random_range(3.0..5.0);
        let s22: f64 = rng.random_range(3.0..5.0);
        let s12 = rng.random_range(-0.4..0.4_f64) * (s11 * s22).sqrt();
        let p = DtmParams::new([site[0] + jitter[0], site[1] + jitter[1]], [s11, s12, s22]);
        let n = rng.random_range(2000..=5000);
        blob_points.push(sample_truncated(&p, n, &mut rng));
        blobs.push(p);
    }
    let mut h = histogram_of(&points, PLANTED_ROWS, PLANTED_COLS);
    let mut blob_cells = Vec::new();
    for pts in &blob_points {
        let bh = histogram_of(pts, PLANTED_ROWS, PLANTED_COLS);
        blob_cells.push(bh.nonempty().map(|(c, _)| c).collect());
        h = add(&h, &bh);
    }
    let mut heights = h.heights().to_vec();
    for &(r, c) in &OUTLIER_SITES {
        heights[r * PLANTED_COLS + c] += rng.random_range(1..=3);
    }
    Planted {
        histogram: Histogram::from_heights(PLANTED_ROWS, PLANTED_COLS, heights),
        main,
        blobs,
        blob_cells,
        outliers: OUTLIER_SITES.to_vec(),
    }
}

/// Cell-wise sum of two histograms of the same shape.
pub fn add(a: &Histogram, b: &Histogram) -> Histogram {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let heights = a.heights().iter().zip(b.heights()).map(|(x, y)| x + y).collect();
    Histogram::from_heights(a.rows(), a.cols(), heights)
}

/// Bipartite rating-style graph: `edges` draws with Zipf-distributed
/// users and items (exponent `s`), plus a dense block of `block` users
/// each rating the same `block` items. Duplicate draws are kept.
pub fn power_law_bipartite(users: usize, items: usize, edges: usize, s: f64, block: usize, seed: u64) -> Graph {
    let mut rng = rng(seed);
    let zu = Zipf::new(users as f64, s).expect("valid zipf");
    let zi = Zipf::new(items as f64, s).expect("valid zipf");
    let mut list = Vec::with_capacity(edges + block * block);
    for _ in 0..edges {
        let u = zu.sample(&mut rng) as u32 - 1;
        let i = zi.sample(&mut rng) as u32 - 1;
        list.push((u, users as u32 + i));
    }
    let block = block.min(users).min(items);
    for u in 0..block {
        for i in 0..block {
            list.push(((users - 1 - u) as u32, (users + items - 1 - i) as u32));
        }
    }
    Graph::bipartite(users, items, list).expect("edges cross sides")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_the_quadrant() {
        let p = DtmParams::new([0.5, 1.0], [4.0, 1.0, 2.0]);
        let pts = sample_truncated(&p, 2000, &mut rng(1));
        assert_eq!(pts.len(), 2000);
        assert!(pts.iter().all(|&(x, y)| x >= 0.0 && y >= 0.0));
    }

    #[test]
    fn planted_is_reproducible() {
        let a = planted(2, 7);
        let b = planted(2, 7);
        assert_eq!(a.histogram, b.histogram);
        assert_eq!(a.blobs.len(), 2);
        for &c in &a.outliers {
            assert!(a.histogram.height(c) > 0);
        }
    }

    #[test]
    fn bipartite_block_is_present() {
        let g = power_law_bipartite(100, 50, 500, 1.2, 5, 3);
        assert_eq!(g.edges().len(), 525);
    }
}
