//! Normality test of an island's footprint along its principal axes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::histogram::Cell;
use crate::stats::{anderson_darling, AdOutcome, MIN_SAMPLES};
use crate::vocab::{DtmModel, Kind};

/// Test of one group of cells: major axis first, then minor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub cells: usize,
    pub axes: Vec<AdOutcome>,
    pub rejected: bool,
    /// Fewer than the minimum number of cells; accepted untested.
    pub too_small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTestResult {
    /// One group for a single Gaussian, one per component for a mixture.
    pub groups: Vec<GroupTest>,
    pub rejected: bool,
}

impl ShapeTestResult {
    pub fn too_small(&self) -> bool {
        self.groups.iter().any(|g| g.too_small)
    }
}

/// Principal axes of the unweighted cell-centre cloud, major first.
pub fn principal_axes(cells: &[Cell]) -> [[f64; 2]; 2] {
    let n = cells.len() as f64;
    let (mut mr, mut mc) = (0.0, 0.0);
    for &(r, c) in cells {
        mr += r as f64;
        mc += c as f64;
    }
    mr /= n;
    mc /= n;
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for &(r, c) in cells {
        let (x, y) = (r as f64 - mr, c as f64 - mc);
        a += x * x;
        b += x * y;
        d += y * y;
    }
    let half = (a - d) / 2.0;
    let lambda = (a + d) / 2.0 + (half * half + b * b).sqrt();
    let major = if b.abs() > 1e-12 * (a + d).max(1e-300) {
        let (x, y) = (b, lambda - a);
        let len = (x * x + y * y).sqrt();
        [x / len, y / len]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    [major, [-major[1], major[0]]]
}

/// Tests one group of cells, each counted once at its centre.
pub fn test_group(cells: &[Cell], critical: f64) -> GroupTest {
    if cells.len() < MIN_SAMPLES {
        return GroupTest { cells: cells.len(), axes: Vec::new(), rejected: false, too_small: true };
    }
    let axes: Vec<AdOutcome> = principal_axes(cells)
        .iter()
        .map(|v| {
            let proj: Vec<f64> =
                cells.iter().map(|&(r, c)| (r as f64 + 0.5) * v[0] + (c as f64 + 0.5) * v[1]).collect();
            anderson_darling(&proj, critical)
        })
        .collect();
    let rejected = axes.iter().any(|a| a.rejected);
    GroupTest { cells: cells.len(), axes, rejected, too_small: false }
}

/// Shape test of an island under its fitted model. Mixture cells go to
/// the component giving them the higher probability (ties to the first)
/// and each component is tested on its own cells.
pub fn island_shape_test(cells: &[Cell], model: &DtmModel, critical: f64) -> Result<ShapeTestResult> {
    let groups = match model.kind {
        Kind::Single => vec![test_group(cells, critical)],
        Kind::Mixture2 => {
            let eval = model.evaluator()?;
            let comps = eval.components();
            let mut split = [Vec::new(), Vec::new()];
            for &cell in cells {
                let k = usize::from(comps[1].prob(cell) > comps[0].prob(cell));
                split[k].push(cell);
            }
            split.iter().map(|g| test_group(g, critical)).collect()
        }
    };
    let rejected = groups.iter().any(|g| g.rejected);
    Ok(ShapeTestResult { groups, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::CRITICAL_1PCT;
    use crate::synth::{histogram_of, rng, sample_truncated};
    use crate::vocab::DtmParams;

    fn ellipse(cr: f64, cc: f64, a: f64, b: f64) -> Vec<Cell> {
        let mut cells = Vec::new();
        for r in 0..80 {
            for c in 0..80 {
                let (x, y) = ((r as f64 + 0.5 - cr) / a, (c as f64 + 0.5 - cc) / b);
                if x * x + y * y <= 1.0 {
                    cells.push((r, c));
                }
            }
        }
        cells
    }

    #[test]
    fn small_island_is_accepted_untested() {
        let cells = vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)];
        let m = DtmModel::single(DtmParams::new([1.0, 1.0], [1.0, 0.0, 1.0]), 5, 0);
        let t = island_shape_test(&cells, &m, CRITICAL_1PCT).unwrap();
        assert!(!t.rejected && t.too_small());
    }

    #[test]
    fn gaussian_footprint_is_accepted() {
        let p = DtmParams::new([20.0, 20.0], [9.0, 1.0, 4.0]);
        for seed in 0..5 {
            let pts = sample_truncated(&p, 1000, &mut rng(seed));
            let cells: Vec<Cell> = histogram_of(&pts, 40, 40).nonempty().map(|(c, _)| c).collect();
            let m = DtmModel::single(p, 1000, 0);
            let t = island_shape_test(&cells, &m, CRITICAL_1PCT).unwrap();
            assert!(!t.rejected, "{t:?}");
        }
    }

    #[test]
    fn two_blobs_reject_on_the_major_axis() {
        let mut cells = ellipse(15.0, 15.0, 3.5, 3.5);
        cells.extend(ellipse(15.0, 55.0, 3.5, 3.5));
        cells.sort_unstable();
        let m = DtmModel::single(DtmParams::new([15.0, 35.0], [4.0, 0.0, 400.0]), 100, 0);
        let t = island_shape_test(&cells, &m, CRITICAL_1PCT).unwrap();
        assert!(t.rejected);
        assert!(t.groups[0].axes[0].rejected);
    }

    #[test]
    fn mixture_tests_each_component() {
        let mut cells = ellipse(15.0, 15.0, 3.5, 3.5);
        cells.extend(ellipse(15.0, 55.0, 3.5, 3.5));
        let m = DtmModel::mixture(
            DtmParams::new([15.0, 15.0], [3.0, 0.0, 3.0]),
            DtmParams::new([15.0, 55.0], [3.0, 0.0, 3.0]),
            100,
            0,
        );
        let t = island_shape_test(&cells, &m, CRITICAL_1PCT).unwrap();
        assert_eq!(t.groups.len(), 2);
        assert_eq!(t.groups[0].cells + t.groups[1].cells, cells.len());
        assert!(!t.rejected, "{t:?}");
    }

    #[test]
    fn axes_follow_the_long_direction() {
        let cells: Vec<Cell> = (0..20).flat_map(|i| [(i, i), (i, i + 1)]).collect();
        let [major, minor] = principal_axes(&cells);
        assert!((major[0].abs() - major[1].abs()).abs() < 0.05);
        assert!((major[0] * minor[0] + major[1] * minor[1]).abs() < 1e-12);
    }
}
