//! Threshold filtering, orthogonal-block detection and local unitarization.
//!
//! Block and row/column indices in this module are 0-based matrix indices.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::polar::{polar_decompose, RANK_DEFICIENT_SV};
use super::{PropagatorMatrix, Stage, UnitarizationMethod};
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::map_model::MapSpec;

/// Zeroes every entry with modulus below `epsilon`.
pub fn filter_threshold(v: &PropagatorMatrix, epsilon: f64) -> Result<PropagatorMatrix> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter { name: "epsilon", reason: format!("need epsilon >= 0, got {epsilon}") });
    }
    let entries = v.entries().map(|z| if z.norm() < epsilon { Complex64::new(0.0, 0.0) } else { z });
    PropagatorMatrix::new(entries, Stage::Filtered(epsilon), *v.basis(), v.map_name())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Block {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    /// Ordered by smallest column index.
    pub blocks: Vec<Block>,
    /// Rows of the filtered matrix that are entirely zero.
    pub zero_rows: Vec<usize>,
}

impl BlockPartition {
    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.cols.len()).collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Connected components of the bipartite nonzero pattern (rows and columns as nodes).
pub fn detect_blocks(vf: &PropagatorMatrix) -> Result<BlockPartition> {
    vf.require_stage("filtered", matches!(vf.stage(), Stage::Filtered(_)))?;
    let n = vf.dim();
    let m = vf.entries();
    let mut sets = DisjointSet::new(2 * n);
    let mut row_used = vec![false; n];
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            if z.re != 0.0 || z.im != 0.0 {
                sets.union(i, n + j);
                row_used[i] = true;
            }
        }
    }

    // blocks are keyed by the root of their first column, so they come out ordered
    let mut root_to_block: Vec<Option<usize>> = vec![None; 2 * n];
    let mut blocks: Vec<Block> = Vec::new();
    for j in 0..n {
        let r = sets.find(n + j);
        let idx = *root_to_block[r].get_or_insert_with(|| {
            blocks.push(Block { rows: Vec::new(), cols: Vec::new() });
            blocks.len() - 1
        });
        blocks[idx].cols.push(j);
    }
    let mut zero_rows = Vec::new();
    for (i, used) in row_used.iter().enumerate() {
        if *used {
            let r = sets.find(i);
            let idx = root_to_block[r].expect("nonzero row is connected to a column");
            blocks[idx].rows.push(i);
        } else {
            zero_rows.push(i);
        }
    }
    Ok(BlockPartition { blocks, zero_rows })
}

/// A square piece of the block-unitarized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareGroup {
    /// All rows, including donated zero rows, ascending.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Zero rows that were appended to square the group.
    pub donated: Vec<usize>,
    /// Number of detected blocks merged into this group.
    pub merged_blocks: usize,
    /// Smallest of the singular values not introduced by donated rows.
    pub min_singular_value: f64,
}

#[derive(Debug, Clone)]
pub struct BlockUnitarization {
    pub propagator: PropagatorMatrix,
    pub groups: Vec<SquareGroup>,
    /// Some group is rank-deficient beyond the zero rows it was padded with.
    pub rank_deficient: bool,
}

impl BlockUnitarization {
    pub fn max_group_dim(&self) -> usize {
        self.groups.iter().map(|g| g.cols.len()).max().unwrap_or(0)
    }
}

/// Squares every block with donated zero rows and polar-unitarizes each square piece.
///
/// Blocks with more rows than columns cannot be squared with zero rows alone;
/// they are merged with the following block (or, at the end, the preceding
/// ones) until the merged group has no row surplus. Zero rows are handed out
/// nearest to the group's mean row index first, lower index on ties.
pub fn unitarize_blocks(vf: &PropagatorMatrix, partition: &BlockPartition) -> Result<BlockUnitarization> {
    vf.require_stage("filtered", matches!(vf.stage(), Stage::Filtered(_)))?;
    validate_partition(vf, partition)?;
    let n = vf.dim();

    let mut merged: Vec<(Vec<usize>, Vec<usize>, usize)> = Vec::new();
    let mut pending: Option<(Vec<usize>, Vec<usize>, usize)> = None;
    for block in &partition.blocks {
        let mut cur = pending.take().unwrap_or_default();
        cur.0.extend_from_slice(&block.rows);
        cur.1.extend_from_slice(&block.cols);
        cur.2 += 1;
        if cur.0.len() <= cur.1.len() {
            merged.push(cur);
        } else {
            pending = Some(cur);
        }
    }
    if let Some(mut cur) = pending {
        while cur.0.len() > cur.1.len() {
            let Some(prev) = merged.pop() else { break };
            cur.0.extend(prev.0);
            cur.1.extend(prev.1);
            cur.2 += prev.2;
        }
        merged.push(cur);
    }

    let mut available: BTreeSet<usize> = partition.zero_rows.iter().copied().collect();
    let total_deficit: usize = merged.iter().map(|(r, c, _)| c.len().saturating_sub(r.len())).sum();
    if total_deficit > available.len() || merged.iter().any(|(r, c, _)| r.len() > c.len()) {
        let surplus: usize = merged.iter().map(|(r, c, _)| r.len().saturating_sub(c.len())).sum();
        return Err(Error::InsufficientZeroRows { deficit: total_deficit.saturating_sub(available.len()) + surplus });
    }

    let source = vf.entries();
    let mut u = DMatrix::<Complex64>::zeros(n, n);
    let mut groups = Vec::with_capacity(merged.len());
    let mut rank_deficient = false;
    for (mut rows, mut cols, merged_blocks) in merged {
        let need = cols.len() - rows.len();
        let center = if rows.is_empty() {
            cols.iter().sum::<usize>() as f64 / cols.len() as f64
        } else {
            rows.iter().sum::<usize>() as f64 / rows.len() as f64
        };
        let mut ranked: Vec<usize> = available.iter().copied().collect();
        ranked.sort_by(|a, b| ((*a as f64 - center).abs(), *a).partial_cmp(&((*b as f64 - center).abs(), *b)).unwrap());
        let donated: Vec<usize> = ranked.into_iter().take(need).collect();
        for r in &donated {
            available.remove(r);
        }
        let own_rows = rows.len();
        rows.extend_from_slice(&donated);
        rows.sort_unstable();
        cols.sort_unstable();

        let sub = DMatrix::from_fn(rows.len(), cols.len(), |i, j| source[(rows[i], cols[j])]);
        let polar = polar_decompose(&sub);
        // donated rows add exact zeros; only the block's own singular values count
        let mut sv: Vec<f64> = polar.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let min_sv = if own_rows == 0 { 0.0 } else { sv[own_rows - 1] };
        rank_deficient |= min_sv < RANK_DEFICIENT_SV;
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                u[(r, c)] = polar.unitary[(i, j)];
            }
        }
        let mut donated = donated;
        donated.sort_unstable();
        groups.push(SquareGroup { rows, cols, donated, merged_blocks, min_singular_value: min_sv });
    }

    let propagator = PropagatorMatrix::new(u, Stage::Unitarized(UnitarizationMethod::BlockPolar), *vf.basis(), vf.map_name())?;
    Ok(BlockUnitarization { propagator, groups, rank_deficient })
}

/// [`filter_threshold`], [`detect_blocks`] and [`unitarize_blocks`] in one go.
pub fn block_unitarize(v: &PropagatorMatrix, epsilon: f64) -> Result<(BlockPartition, BlockUnitarization)> {
    let vf = filter_threshold(v, epsilon)?;
    let partition = detect_blocks(&vf)?;
    let out = unitarize_blocks(&vf, &partition)?;
    Ok((partition, out))
}

fn validate_partition(vf: &PropagatorMatrix, partition: &BlockPartition) -> Result<()> {
    let n = vf.dim();
    let invalid = |reason: String| Err(Error::InvalidParameter { name: "partition", reason });
    let mut col_owner = vec![usize::MAX; n];
    let mut row_owner = vec![usize::MAX; n];
    for (k, block) in partition.blocks.iter().enumerate() {
        for &c in &block.cols {
            if c >= n || col_owner[c] != usize::MAX {
                return invalid(format!("column {c} is out of range or in two blocks"));
            }
            col_owner[c] = k;
        }
        for &r in &block.rows {
            if r >= n || row_owner[r] != usize::MAX {
                return invalid(format!("row {r} is out of range or in two blocks"));
            }
            row_owner[r] = k;
        }
    }
    if let Some(c) = col_owner.iter().position(|&o| o == usize::MAX) {
        return invalid(format!("column {c} belongs to no block"));
    }
    for &r in &partition.zero_rows {
        if r >= n || row_owner[r] != usize::MAX {
            return invalid(format!("zero row {r} is out of range or inside a block"));
        }
    }
    let m = vf.entries();
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            if (z.re != 0.0 || z.im != 0.0) && row_owner[i] != col_owner[j] {
                return invalid(format!("entry ({i}, {j}) couples two blocks"));
            }
        }
    }
    Ok(())
}

/// Fractional part of the image of cell edge `b` (0..=N) in grid units.
///
/// Zero iff the edge maps onto an edge. Values within 1e-9 of an integer are
/// reported as zero.
pub fn block_boundary_fraction(map: &MapSpec, b: usize, basis: &BasisSpec) -> Result<f64> {
    let grid = basis.grid()?;
    if b > grid.n {
        let x = grid.edge(b);
        return Err(Error::Domain { x, lo: basis.domain().lo, hi: basis.domain().hi });
    }
    let y = map.eval_forward(grid.edge(b))?;
    let u = (y - grid.lo) / grid.dx;
    let frac = u - u.floor();
    Ok(if frac < 1e-9 || 1.0 - frac < 1e-9 { 0.0 } else { frac })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityStats {
    pub nnz: usize,
    pub max_row_nnz: usize,
    pub max_col_nnz: usize,
    /// `(rows, cols)` per block, when a partition is supplied.
    pub block_sizes: Vec<(usize, usize)>,
    pub epsilon: Option<f64>,
}

impl SparsityStats {
    pub fn median_block_width(&self) -> Option<f64> {
        let mut w: Vec<usize> = self.block_sizes.iter().map(|&(_, c)| c).collect();
        if w.is_empty() {
            return None;
        }
        w.sort_unstable();
        let k = w.len();
        Some(if k % 2 == 1 { w[k / 2] as f64 } else { 0.5 * (w[k / 2 - 1] + w[k / 2]) as f64 })
    }

    pub fn max_block_width(&self) -> Option<usize> {
        self.block_sizes.iter().map(|&(_, c)| c).max()
    }
}

pub fn sparsity_stats(m: &PropagatorMatrix, zero_tol: f64, partition: Option<&BlockPartition>) -> SparsityStats {
    let n = m.dim();
    let e = m.entries();
    let mut rows = vec![0usize; n];
    let mut cols = vec![0usize; n];
    for j in 0..n {
        for i in 0..n {
            if e[(i, j)].norm() > zero_tol {
                rows[i] += 1;
                cols[j] += 1;
            }
        }
    }
    SparsityStats {
        nnz: rows.iter().sum(),
        max_row_nnz: rows.iter().copied().max().unwrap_or(0),
        max_col_nnz: cols.iter().copied().max().unwrap_or(0),
        block_sizes: partition.map(|p| p.blocks.iter().map(Block::shape).collect()).unwrap_or_default(),
        epsilon: match m.stage() {
            Stage::Filtered(eps) => Some(eps),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::Interval;
    use crate::propagator::{polar::polar_decompose, unitarity_defect};

    fn filtered(m: DMatrix<Complex64>) -> PropagatorMatrix {
        let basis = BasisSpec::spatial(m.nrows(), Interval::unit()).unwrap();
        let v = PropagatorMatrix::new(m, Stage::Truncated, basis, "test").unwrap();
        filter_threshold(&v, 0.0).unwrap()
    }

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn filter_edge_cases() {
        let m = DMatrix::from_fn(4, 4, |i, j| r(0.1 * (i + 2 * j) as f64 + 0.05));
        let v = filtered(m.clone());
        assert_eq!(v.entries(), &m);
        let basis = *v.basis();
        let raw = PropagatorMatrix::new(m, Stage::Truncated, basis, "t").unwrap();
        let all = filter_threshold(&raw, 10.0).unwrap();
        assert!(all.entries().iter().all(|z| *z == r(0.0)));
        assert_eq!(detect_blocks(&all).unwrap().zero_rows, vec![0, 1, 2, 3]);
        assert!(filter_threshold(&raw, -1.0).is_err());
        assert!(detect_blocks(&raw).is_err());
    }

    #[test]
    fn two_diagonal_blocks() {
        let m = DMatrix::from_fn(6, 6, |i, j| if (i < 3) == (j < 3) { r(1.0 + (i * j) as f64) } else { r(0.0) });
        let p = detect_blocks(&filtered(m)).unwrap();
        assert_eq!(p.blocks, vec![Block { rows: vec![0, 1, 2], cols: vec![0, 1, 2] }, Block { rows: vec![3, 4, 5], cols: vec![3, 4, 5] }]);
        assert!(p.zero_rows.is_empty());
    }

    #[test]
    fn permutation_gives_singletons() {
        let perm = [2usize, 0, 3, 1, 4];
        let m = DMatrix::from_fn(5, 5, |i, j| if perm[j] == i { r(1.0) } else { r(0.0) });
        let p = detect_blocks(&filtered(m)).unwrap();
        assert_eq!(p.blocks.len(), 5);
        assert!(p.blocks.iter().all(|b| b.shape() == (1, 1)));
    }

    #[test]
    fn block_diagonal_matches_blockwise_polar() {
        let a = DMatrix::from_row_slice(2, 2, &[r(1.0), r(0.4), r(-0.3), r(0.8)]);
        let b = DMatrix::from_row_slice(3, 3, &[r(0.5), r(0.2), r(0.0), r(0.1), r(0.9), r(0.3), r(0.0), r(-0.4), r(0.7)]);
        let mut m = DMatrix::zeros(5, 5);
        m.view_mut((0, 0), (2, 2)).copy_from(&a);
        m.view_mut((2, 2), (3, 3)).copy_from(&b);
        let vf = filtered(m);
        let out = unitarize_blocks(&vf, &detect_blocks(&vf).unwrap()).unwrap();
        let mut expected = DMatrix::zeros(5, 5);
        expected.view_mut((0, 0), (2, 2)).copy_from(&polar_decompose(&a).unitary);
        expected.view_mut((2, 2), (3, 3)).copy_from(&polar_decompose(&b).unitary);
        assert!((out.propagator.entries() - expected).iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn identity_stays_identity() {
        let vf = filtered(DMatrix::identity(4, 4));
        let out = unitarize_blocks(&vf, &detect_blocks(&vf).unwrap()).unwrap();
        assert_eq!(out.propagator.entries(), &DMatrix::<Complex64>::identity(4, 4));
    }

    #[test]
    fn wide_blocks_take_nearest_zero_rows() {
        // rows 0 and 4 are zero; block A = cols {0,1} -> row 1, block B = cols {2,3,4} -> rows {2,3}
        let mut m = DMatrix::zeros(5, 5);
        m[(1, 0)] = r(0.6);
        m[(1, 1)] = r(0.5);
        m[(2, 2)] = r(0.7);
        m[(3, 3)] = r(0.4);
        m[(2, 3)] = r(0.2);
        m[(3, 4)] = r(0.9);
        let vf = filtered(m);
        let part = detect_blocks(&vf).unwrap();
        assert_eq!(part.zero_rows, vec![0, 4]);
        let out = unitarize_blocks(&vf, &part).unwrap();
        assert_eq!(out.groups[0].donated, vec![0]);
        assert_eq!(out.groups[1].donated, vec![4]);
        assert!(unitarity_defect(out.propagator.entries()) < 1e-12);
    }

    #[test]
    fn tall_block_is_merged_with_neighbour() {
        // col 0 -> rows {0,1} (tall); col 1,2 -> row 2 (wide); row 3 unused, col 3 empty
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = r(0.5);
        m[(1, 0)] = r(0.5);
        m[(2, 1)] = r(0.7);
        m[(2, 2)] = r(0.7);
        let vf = filtered(m);
        let part = detect_blocks(&vf).unwrap();
        let out = unitarize_blocks(&vf, &part).unwrap();
        assert_eq!(out.groups[0].merged_blocks, 2);
        assert!(unitarity_defect(out.propagator.entries()) < 1e-12);
    }

    #[test]
    fn missing_zero_rows_are_reported() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = r(0.5);
        m[(0, 1)] = r(0.5);
        m[(1, 2)] = r(1.0);
        let vf = filtered(m);
        let mut part = detect_blocks(&vf).unwrap();
        assert_eq!(part.zero_rows, vec![2]);
        part.zero_rows.clear();
        assert_eq!(unitarize_blocks(&vf, &part).unwrap_err(), Error::InsufficientZeroRows { deficit: 1 });
    }

    #[test]
    fn inconsistent_partition_is_rejected() {
        let vf = filtered(DMatrix::from_element(2, 2, r(1.0)));
        let bad = BlockPartition {
            blocks: vec![Block { rows: vec![0], cols: vec![0] }, Block { rows: vec![1], cols: vec![1] }],
            zero_rows: vec![],
        };
        assert!(matches!(unitarize_blocks(&vf, &bad), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn identity_stats() {
        let vf = filtered(DMatrix::identity(6, 6));
        let part = detect_blocks(&vf).unwrap();
        let s = sparsity_stats(&vf, 1e-12, Some(&part));
        assert_eq!((s.nnz, s.max_row_nnz, s.max_col_nnz), (6, 1, 1));
        assert_eq!(s.median_block_width(), Some(1.0));
        assert_eq!(s.epsilon, Some(0.0));
    }

    #[test]
    fn boundary_fraction_identity() {
        let basis = BasisSpec::spatial(200, Interval::unit()).unwrap();
        let id = MapSpec::identity(Interval::unit());
        for b in [0, 1, 57, 200] {
            assert_eq!(block_boundary_fraction(&id, b, &basis).unwrap(), 0.0);
        }
        assert!(block_boundary_fraction(&id, 201, &basis).is_err());
    }

    fn truncated(map: &MapSpec, n: usize) -> PropagatorMatrix {
        let basis = BasisSpec::spatial(n, Interval::unit()).unwrap();
        crate::propagator::compute_truncated_matrix(map, &basis, Default::default()).unwrap()
    }

    #[test]
    fn commensurate_linear_map_tiles_into_equal_blocks() {
        // X(x) = 2x/3: every third edge lands on every second edge
        let v = truncated(&MapSpec::linear(2.0 / 3.0, 0.0, Interval::unit()), 198);
        let vf = filter_threshold(&v, 1e-12).unwrap();
        let p = detect_blocks(&vf).unwrap();
        let inner: Vec<_> = p.blocks.iter().filter(|b| !b.rows.is_empty()).collect();
        assert_eq!(inner.len(), 66);
        assert!(inner.iter().all(|b| b.shape() == (2, 3)));
        assert_eq!(p.zero_rows.len(), 198 - 132);
        let basis = *v.basis();
        let map = MapSpec::linear(2.0 / 3.0, 0.0, Interval::unit());
        assert_eq!(block_boundary_fraction(&map, 3, &basis).unwrap(), 0.0);
        assert!(block_boundary_fraction(&map, 1, &basis).unwrap() > 0.1);

        let out = unitarize_blocks(&vf, &p).unwrap();
        assert!(unitarity_defect(out.propagator.entries()) < 1e-12);
        assert!(!out.rank_deficient);
    }

    #[test]
    fn sample_map_boundary_is_off_grid() {
        let basis = BasisSpec::spatial(200, Interval::unit()).unwrap();
        let z = block_boundary_fraction(&MapSpec::sample(), 57, &basis).unwrap();
        assert!(z > 0.0 && z < 1.0);
    }
}
