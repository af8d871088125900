//! The water-level tree: islands found by flooding the histogram at
//! rising log-height levels, refined by contraction, pruning and
//! expansion.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Cell, Histogram};
use crate::morphology::{binary_open, connected_components, flood, neighbours8, Element, Mask};

pub type IslandId = usize;

/// A connected set of cells surviving some water level.
#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    pub id: IslandId,
    /// Natural-log water level; the root sits one step below zero.
    pub level: f64,
    /// Core cells, row-major.
    pub cells: Vec<Cell>,
    /// Total height over the core cells.
    pub mass: u64,
    /// Cells absorbed during expansion, in absorption order.
    pub ring: Vec<Cell>,
    pub parent: Option<IslandId>,
    pub children: Vec<IslandId>,
}

impl Island {
    pub fn area(&self) -> usize {
        self.cells.len()
    }

    /// Core followed by expansion ring.
    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().chain(&self.ring).copied()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Level step; defaults to `ln(h_max) / levels`.
    pub step: Option<f64>,
    pub levels: usize,
    pub element: Element,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { step: None, levels: 20, element: Element::square2() }
    }
}

/// Island count seen at one flood level, before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: f64,
    pub islands: usize,
}

#[derive(Debug, Clone)]
pub struct WaterLevelTree {
    nodes: Vec<Option<Island>>,
    rows: usize,
    cols: usize,
    pub step: f64,
    pub levels: Vec<LevelInfo>,
}

pub const ROOT: IslandId = 0;

impl WaterLevelTree {
    pub fn root(&self) -> &Island {
        self.get(ROOT)
    }

    pub fn get(&self, id: IslandId) -> &Island {
        self.nodes[id].as_ref().expect("island was removed from the tree")
    }

    pub fn contains(&self, id: IslandId) -> bool {
        self.nodes.get(id).is_some_and(Option::is_some)
    }

    fn get_mut(&mut self, id: IslandId) -> &mut Island {
        self.nodes[id].as_mut().expect("island was removed from the tree")
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Live islands in id order.
    pub fn islands(&self) -> impl Iterator<Item = &Island> {
        self.nodes.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.islands().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Islands in breadth-first order from the root, children by id.
    pub fn bfs(&self) -> Vec<IslandId> {
        let mut order = Vec::new();
        let mut queue = VecDeque::from([ROOT]);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            queue.extend(self.get(id).children.iter().copied());
        }
        order
    }

    pub fn depth(&self) -> usize {
        fn go(t: &WaterLevelTree, id: IslandId) -> usize {
            1 + t.get(id).children.iter().map(|&c| go(t, c)).max().unwrap_or(0)
        }
        go(self, ROOT)
    }

    pub fn leaves(&self) -> Vec<IslandId> {
        self.islands().filter(|i| i.is_leaf()).map(|i| i.id).collect()
    }

    fn remove_subtree(&mut self, id: IslandId) {
        let children = std::mem::take(&mut self.get_mut(id).children);
        for c in children {
            self.remove_subtree(c);
        }
        self.nodes[id] = None;
    }

    /// Assembles a tree from explicit islands; `islands[0]` must be the
    /// root and every island's id must equal its index.
    pub fn from_islands(rows: usize, cols: usize, islands: Vec<Island>) -> Self {
        for (i, isl) in islands.iter().enumerate() {
            assert_eq!(isl.id, i, "island ids must match their position");
        }
        assert!(islands.first().is_some_and(|r| r.parent.is_none()), "first island must be the root");
        Self { nodes: islands.into_iter().map(Some).collect(), rows, cols, step: 1.0, levels: Vec::new() }
    }
}

/// Builds the unrefined tree by flooding `h` at levels `0, s, 2s, …` up
/// to `ln(h_max)`, smoothing each level with a binary opening.
pub fn build_tree(h: &Histogram, cfg: &TreeConfig) -> Result<WaterLevelTree> {
    if h.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let (rows, cols) = (h.rows(), h.cols());
    let top = (h.max_height() as f64).ln();
    let step = match cfg.step {
        Some(s) if !(s > 0.0) => return Err(Error::Invalid(format!("level step must be positive, got {s}"))),
        Some(s) => s,
        None if top > 0.0 => top / cfg.levels.max(1) as f64,
        None => 1.0,
    };

    let all: Vec<Cell> = h.nonempty().map(|(c, _)| c).collect();
    let root = Island {
        id: ROOT,
        level: -step,
        mass: h.total(),
        cells: all,
        ring: Vec::new(),
        parent: None,
        children: Vec::new(),
    };
    let mut tree = WaterLevelTree { nodes: vec![Some(root)], rows, cols, step, levels: Vec::new() };

    // label[cell] = island id at the previous level
    let mut label = vec![ROOT; rows * cols];
    let mut k = 0usize;
    loop {
        let level = k as f64 * step;
        if level > top + 1e-12 {
            break;
        }
        let mask = binary_open(&flood(h, level), &cfg.element);
        let comps = connected_components(&mask);
        tree.levels.push(LevelInfo { level, islands: comps.len() });
        if comps.is_empty() {
            break;
        }
        let mut next = vec![usize::MAX; rows * cols];
        for cells in comps {
            let parent = majority_parent(&cells, &label, cols);
            let id = tree.nodes.len();
            let mass = cells.iter().map(|&c| h.height(c)).sum();
            for &(r, c) in &cells {
                next[r * cols + c] = id;
            }
            tree.get_mut(parent).children.push(id);
            tree.nodes.push(Some(Island {
                id,
                level,
                cells,
                mass,
                ring: Vec::new(),
                parent: Some(parent),
                children: Vec::new(),
            }));
        }
        label = next;
        k += 1;
    }
    Ok(tree)
}

/// Previous-level island holding most of `cells`; ties go to the lower id.
fn majority_parent(cells: &[Cell], label: &[IslandId], cols: usize) -> IslandId {
    let mut counts: Vec<(IslandId, usize)> = Vec::new();
    for &(r, c) in cells {
        let l = label[r * cols + c];
        if l == usize::MAX {
            continue;
        }
        match counts.iter_mut().find(|(id, _)| *id == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(ROOT, |(id, _)| id)
}

/// Merges every only-child into its parent: the parent keeps its own
/// (larger) cell set and adopts the grandchildren. Applied depth-first
/// until no island other than the root has exactly one child.
pub fn contract(mut t: WaterLevelTree) -> WaterLevelTree {
    let mut stack = vec![ROOT];
    while let Some(id) = stack.pop() {
        if id != ROOT {
            while t.get(id).children.len() == 1 {
                let only = t.get(id).children[0];
                let grandchildren = std::mem::take(&mut t.get_mut(only).children);
                for &g in &grandchildren {
                    t.get_mut(g).parent = Some(id);
                }
                t.get_mut(id).children = grandchildren;
                t.nodes[only] = None;
            }
        }
        stack.extend(t.get(id).children.iter().rev().copied());
    }
    t
}

/// Breadth-first pruning: when the children of an island cover less than
/// half of its area, all of them (with descendants) are removed.
pub fn prune(mut t: WaterLevelTree) -> WaterLevelTree {
    let mut queue = VecDeque::from([ROOT]);
    while let Some(id) = queue.pop_front() {
        let node = t.get(id);
        if node.children.is_empty() {
            continue;
        }
        let child_area: usize = node.children.iter().map(|&c| t.get(c).area()).sum();
        if 2 * child_area < node.area() {
            for c in std::mem::take(&mut t.get_mut(id).children) {
                t.remove_subtree(c);
            }
        } else {
            queue.extend(node.children.iter().copied());
        }
    }
    t
}

/// Grows every island outward over non-empty 8-neighbours, at most to
/// twice its core area, stopping once it touches a sibling.
///
/// Siblings grow together in rounds, lowest id first, so a cell reachable
/// by two siblings in the same round goes to the lower id. Growth is
/// confined to the parent's cells (core and ring). Cells within a round
/// are taken tallest first.
pub fn expand(mut t: WaterLevelTree, h: &Histogram) -> WaterLevelTree {
    let (rows, cols) = (t.rows, t.cols);
    for parent in t.bfs() {
        let siblings = t.get(parent).children.clone();
        if siblings.is_empty() {
            continue;
        }
        let mut domain = vec![false; rows * cols];
        for (r, c) in t.get(parent).all_cells() {
            domain[r * cols + c] = true;
        }
        let mut owner = vec![usize::MAX; rows * cols];
        for &s in &siblings {
            for &(r, c) in &t.get(s).cells {
                owner[r * cols + c] = s;
            }
        }
        let mut active: Vec<IslandId> = siblings.clone();
        active.sort_unstable();
        while !active.is_empty() {
            let mut still = Vec::new();
            for &id in &active {
                let isl = t.get(id);
                let cap = 2 * isl.area() - (isl.area() + isl.ring.len());
                let mut seen = Mask::new(rows, cols);
                let mut candidates = Vec::new();
                let mut touching = false;
                for cell in isl.all_cells() {
                    for (r, c) in neighbours8(rows, cols, cell) {
                        let j = r * cols + c;
                        if owner[j] == id || seen.get((r, c)) || h.height((r, c)) == 0 || !domain[j] {
                            continue;
                        }
                        seen.set((r, c), true);
                        if owner[j] == usize::MAX {
                            candidates.push((r, c));
                        } else {
                            touching = true;
                        }
                    }
                }
                candidates.sort_by(|&a, &b| h.height(b).cmp(&h.height(a)).then(a.cmp(&b)));
                let full = candidates.len() >= cap;
                candidates.truncate(cap);
                for &(r, c) in &candidates {
                    owner[r * cols + c] = id;
                }
                let grew = !candidates.is_empty();
                t.get_mut(id).ring.extend(candidates);
                if grew && !touching && !full {
                    still.push(id);
                }
            }
            active = still;
        }
    }
    t
}

/// Builds and refines the tree: flood, contract, prune, expand.
pub fn water_level_tree(h: &Histogram, cfg: &TreeConfig) -> Result<WaterLevelTree> {
    let t = build_tree(h, cfg)?;
    Ok(expand(prune(contract(t)), h))
}

/// Debug record of one island; cells are run-length encoded as
/// `[row, first_col, run]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandDump {
    pub id: IslandId,
    pub level: f64,
    pub area: usize,
    pub mass: u64,
    pub parent: Option<IslandId>,
    pub cells: Vec<[usize; 3]>,
    pub ring: Vec<[usize; 3]>,
    pub children: Vec<IslandDump>,
}

pub fn run_length(cells: &[Cell]) -> Vec<[usize; 3]> {
    let mut sorted = cells.to_vec();
    sorted.sort_unstable();
    let mut runs: Vec<[usize; 3]> = Vec::new();
    for (r, c) in sorted {
        match runs.last_mut() {
            Some(run) if run[0] == r && run[1] + run[2] == c => run[2] += 1,
            _ => runs.push([r, c, 1]),
        }
    }
    runs
}

pub fn expand_runs(runs: &[[usize; 3]]) -> Vec<Cell> {
    runs.iter().flat_map(|&[r, c, n]| (c..c + n).map(move |cc| (r, cc))).collect()
}

impl WaterLevelTree {
    pub fn dump(&self) -> IslandDump {
        fn go(t: &WaterLevelTree, id: IslandId) -> IslandDump {
            let i = t.get(id);
            IslandDump {
                id,
                level: i.level,
                area: i.area(),
                mass: i.mass,
                parent: i.parent,
                cells: run_length(&i.cells),
                ring: run_length(&i.ring),
                children: i.children.iter().map(|&c| go(t, c)).collect(),
            }
        }
        go(self, ROOT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn island(id: IslandId, parent: Option<IslandId>, children: &[IslandId], cells: Vec<Cell>) -> Island {
        Island {
            id,
            level: id as f64,
            mass: cells.len() as u64,
            cells,
            ring: Vec::new(),
            parent,
            children: children.to_vec(),
        }
    }

    fn block(r0: usize, c0: usize, n: usize) -> Vec<Cell> {
        (r0..r0 + n).flat_map(|r| (c0..c0 + n).map(move |c| (r, c))).collect()
    }

    fn cells_n(n: usize, row: usize) -> Vec<Cell> {
        (0..n).map(|c| (row, c)).collect()
    }

    #[test]
    fn single_cell_histogram() {
        let h = Histogram::from_heights(1, 1, vec![5]);
        let t = build_tree(&h, &TreeConfig::default()).unwrap();
        // a lone cell cannot contain the 2x2 probe
        assert_eq!(t.root().cells, [(0, 0)]);
        assert!(t.root().is_leaf());
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let h = Histogram::from_heights(2, 2, vec![0; 4]);
        assert!(matches!(build_tree(&h, &TreeConfig::default()), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn uniform_region_is_a_chain() {
        let h = Histogram::from_heights(4, 4, vec![7; 16]);
        let t = build_tree(&h, &TreeConfig::default()).unwrap();
        let mut id = ROOT;
        let mut depth = 0;
        while let [only] = t.get(id).children[..] {
            id = only;
            depth += 1;
            assert_eq!(t.get(id).area(), 16);
        }
        assert!(t.get(id).is_leaf());
        assert_eq!(depth, 21);
    }

    #[test]
    fn two_bumps_split_above_saddle() {
        // two 3x3 plateaus of height 100 joined by a 3-wide saddle of height 3
        let mut heights = vec![0u64; 3 * 9];
        for r in 0..3 {
            for c in 0..9 {
                heights[r * 9 + c] = if (3..6).contains(&c) { 3 } else { 100 };
            }
        }
        let h = Histogram::from_heights(3, 9, heights);
        let t = build_tree(&h, &TreeConfig::default()).unwrap();
        let level0 = &t.root().children;
        assert_eq!(level0.len(), 1);
        // manual thresholding: above ln 3 only the plateaus survive
        let above: Vec<&Island> = t.islands().filter(|i| i.level > 3f64.ln()).collect();
        let first = above.iter().map(|i| i.level).fold(f64::INFINITY, f64::min);
        let split: Vec<_> = above.iter().filter(|i| i.level == first).collect();
        assert_eq!(split.len(), 2);
        assert_eq!(split[0].cells, block(0, 0, 3));
        assert_eq!(split[1].cells, (0..3).flat_map(|r| (6..9).map(move |c| (r, c))).collect::<Vec<_>>());
        for i in split {
            assert!(t.get(i.parent.unwrap()).level < i.level);
        }
    }

    #[test]
    fn children_nest_in_parents() {
        let mut heights = vec![0u64; 8 * 8];
        for r in 0..8 {
            for c in 0..8 {
                heights[r * 8 + c] = 1 + ((r * 7 + c * 3) % 11) as u64 * (r + c) as u64;
            }
        }
        let h = Histogram::from_heights(8, 8, heights);
        let t = build_tree(&h, &TreeConfig::default()).unwrap();
        for i in t.islands() {
            if let Some(p) = i.parent {
                let pm = Mask::from_cells(8, 8, &t.get(p).cells);
                assert!(Mask::from_cells(8, 8, &i.cells).is_subset(&pm));
                assert!(i.level > t.get(p).level);
            }
        }
    }

    #[test]
    fn contract_chain_keeps_the_base() {
        // root -> a -> b -> c
        let t = WaterLevelTree::from_islands(
            1,
            4,
            vec![
                island(0, None, &[1], cells_n(4, 0)),
                island(1, Some(0), &[2], cells_n(3, 0)),
                island(2, Some(1), &[3], cells_n(2, 0)),
                island(3, Some(2), &[], cells_n(1, 0)),
            ],
        );
        let t = contract(t);
        assert_eq!(t.root().children, [1]);
        assert!(t.get(1).is_leaf());
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn contract_only_touches_single_child_nodes() {
        // root -> {1, 2}; 1 -> {3}; 2 -> {4, 5}
        let t = WaterLevelTree::from_islands(
            1,
            8,
            vec![
                island(0, None, &[1, 2], cells_n(8, 0)),
                island(1, Some(0), &[3], cells_n(3, 0)),
                island(2, Some(0), &[4, 5], cells_n(4, 0)),
                island(3, Some(1), &[], cells_n(2, 0)),
                island(4, Some(2), &[], cells_n(1, 0)),
                island(5, Some(2), &[], cells_n(1, 0)),
            ],
        );
        let t = contract(t);
        assert!(!t.contains(3));
        assert_eq!(t.len(), 5);
        assert_eq!(t.get(2).children, [4, 5]);
        assert!(t.get(1).is_leaf());
    }

    #[test]
    fn contract_adopts_grandchildren() {
        // root -> {1, 6}; 1 -> 2 -> {3, 4}
        let t = WaterLevelTree::from_islands(
            1,
            9,
            vec![
                island(0, None, &[1, 5], cells_n(9, 0)),
                island(1, Some(0), &[2], cells_n(5, 0)),
                island(2, Some(1), &[3, 4], cells_n(4, 0)),
                island(3, Some(2), &[], cells_n(2, 0)),
                island(4, Some(2), &[], cells_n(2, 0)),
                island(5, Some(0), &[], cells_n(2, 0)),
            ],
        );
        let t = contract(t);
        assert_eq!(t.get(1).children, [3, 4]);
        assert_eq!(t.get(3).parent, Some(1));
    }

    fn with_children(parent_area: usize, child_areas: &[usize]) -> WaterLevelTree {
        let mut nodes = vec![
            island(0, None, &[1], cells_n(parent_area + 1, 0)),
            island(1, Some(0), &(2..2 + child_areas.len()).collect::<Vec<_>>(), cells_n(parent_area, 0)),
        ];
        for (k, &a) in child_areas.iter().enumerate() {
            nodes.push(island(2 + k, Some(1), &[], cells_n(a, 0)));
        }
        WaterLevelTree::from_islands(1, parent_area + 1, nodes)
    }

    #[test]
    fn prune_small_children() {
        let t = prune(with_children(100, &[30, 10]));
        assert!(t.get(1).is_leaf());
        assert_eq!(t.len(), 2);
        let t = prune(with_children(100, &[30, 30]));
        assert_eq!(t.get(1).children, [2, 3]);
    }

    #[test]
    fn prune_removes_whole_subtree() {
        let mut t = with_children(100, &[30, 10]);
        t.nodes[2].as_mut().unwrap().children = vec![4];
        t.nodes.push(Some(island(4, Some(2), &[], cells_n(20, 0))));
        let t = prune(t);
        assert!(!t.contains(4) && !t.contains(2));
    }

    fn expanded_pair(heights: Vec<u64>, rows: usize, cols: usize, a: Vec<Cell>, b: Option<Vec<Cell>>) -> WaterLevelTree {
        let h = Histogram::from_heights(rows, cols, heights);
        let all: Vec<Cell> = h.nonempty().map(|(c, _)| c).collect();
        let mut nodes = vec![island(0, None, &[1], all), island(1, Some(0), &[], a)];
        if let Some(b) = b {
            nodes[0].children.push(2);
            nodes.push(island(2, Some(0), &[], b));
        }
        expand(WaterLevelTree::from_islands(rows, cols, nodes), &h)
    }

    #[test]
    fn expand_isolated_island_is_unchanged() {
        let mut heights = vec![0; 16];
        for (r, c) in block(1, 1, 2) {
            heights[r * 4 + c] = 5;
        }
        let t = expanded_pair(heights, 4, 4, block(1, 1, 2), None);
        assert!(t.get(1).ring.is_empty());
    }

    #[test]
    fn expand_stops_at_double_area() {
        // 2x2 island at (1,1) with four non-empty cells directly above it
        // and beside it; nothing further out
        let mut heights = vec![0; 25];
        for (r, c) in block(1, 1, 2) {
            heights[r * 5 + c] = 9;
        }
        for &(r, c) in &[(0, 1), (0, 2), (1, 3), (2, 3)] {
            heights[r * 5 + c] = 1;
        }
        heights[4 * 5 + 4] = 1; // far cell, never adjacent
        let t = expanded_pair(heights, 5, 5, block(1, 1, 2), None);
        let mut ring = t.get(1).ring.clone();
        ring.sort_unstable();
        assert_eq!(ring, [(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn contested_cell_goes_to_lower_id() {
        // islands at columns 0-1 and 3-4 of a 2x5 grid, contested column 2
        let heights = vec![4; 10];
        let a = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        let b = vec![(0, 3), (0, 4), (1, 3), (1, 4)];
        let t = expanded_pair(heights, 2, 5, a, Some(b));
        let mut ring = t.get(1).ring.clone();
        ring.sort_unstable();
        assert_eq!(ring, [(0, 2), (1, 2)]);
        assert!(t.get(2).ring.is_empty());
    }

    #[test]
    fn run_length_roundtrip() {
        let cells = vec![(0, 1), (0, 2), (0, 3), (2, 0), (2, 2)];
        let runs = run_length(&cells);
        assert_eq!(runs, [[0, 1, 3], [2, 0, 1], [2, 2, 1]]);
        assert_eq!(expand_runs(&runs), cells);
    }
}
