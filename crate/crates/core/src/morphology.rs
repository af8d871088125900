//! Binary masks over the histogram grid: flooding, opening, and
//! 8-connected component labelling.

use crate::histogram::{Cell, Histogram};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, bits }
    }

    pub fn from_cells(rows: usize, cols: usize, cells: &[Cell]) -> Self {
        let mut m = Self::new(rows, cols);
        for &c in cells {
            m.set(c, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, (r, c): Cell) -> bool {
        self.bits[r * self.cols + c]
    }

    /// False outside the grid.
    #[inline]
    pub fn get_signed(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols && self.bits[r as usize * self.cols + c as usize]
    }

    #[inline]
    pub fn set(&mut self, (r, c): Cell, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (i / self.cols, i % self.cols)).collect()
    }

    /// `self ⊆ other`.
    pub fn is_subset(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Cells whose height survives water level `level`: `h > 0` and
/// `ln h ≥ level`.
pub fn flood(h: &Histogram, level: f64) -> Mask {
    Mask::from_fn(h.rows(), h.cols(), |r, c| {
        let v = h.height((r, c));
        v > 0 && (v as f64).ln() >= level
    })
}

/// Structuring element as offsets from its origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    offsets: Vec<(isize, isize)>,
}

impl Element {
    pub fn new(offsets: Vec<(isize, isize)>) -> Self {
        assert!(!offsets.is_empty(), "structuring element needs at least one offset");
        Self { offsets }
    }

    /// 2×2 square with its origin in the top-left corner.
    pub fn square2() -> Self {
        Self::new(vec![(0, 0), (0, 1), (1, 0), (1, 1)])
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

impl Default for Element {
    fn default() -> Self {
        Self::square2()
    }
}

pub fn erode(m: &Mask, e: &Element) -> Mask {
    Mask::from_fn(m.rows, m.cols, |r, c| {
        e.offsets.iter().all(|&(dr, dc)| m.get_signed(r as isize + dr, c as isize + dc))
    })
}

pub fn dilate(m: &Mask, e: &Element) -> Mask {
    let mut out = Mask::new(m.rows, m.cols);
    for (r, c) in m.cells() {
        for &(dr, dc) in &e.offsets {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < m.rows && (cc as usize) < m.cols {
                out.set((rr as usize, cc as usize), true);
            }
        }
    }
    out
}

/// Erosion followed by dilation.
pub fn binary_open(m: &Mask, e: &Element) -> Mask {
    dilate(&erode(m, e), e)
}

const NEIGHBOURS_8: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// In-grid 8-neighbours of a cell.
pub fn neighbours8(rows: usize, cols: usize, (r, c): Cell) -> impl Iterator<Item = Cell> {
    NEIGHBOURS_8.iter().filter_map(move |&(dr, dc)| {
        let (rr, cc) = (r as isize + dr, c as isize + dc);
        (rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols).then_some((rr as usize, cc as usize))
    })
}

/// Maximal 8-connected components, ordered by their first cell in
/// row-major order; cells inside a component are row-major too.
pub fn connected_components(m: &Mask) -> Vec<Vec<Cell>> {
    let mut seen = vec![false; m.rows * m.cols];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..m.rows * m.cols {
        if !m.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let cell = (i / m.cols, i % m.cols);
            comp.push(cell);
            for (r, c) in neighbours8(m.rows, m.cols, cell) {
                let j = r * m.cols + c;
                if m.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}
