//! Invariant-subspace decomposition of the no-jump generator.
//!
//! The effective Hamiltonian of every model preserves a partition of the
//! basis into connected components (for the pair source: fixed `n₁ − n₂`).
//! Propagators are stored as one small dense block per component, which keeps
//! products and exponentials cheap for the tensor-product models.

use std::sync::Arc;

use crate::hilbert::{Operator, C64, ZERO};

/// Partition of basis indices into blocks closed under the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure {
    dim: usize,
    blocks: Vec<Vec<usize>>,
    owner: Vec<(usize, usize)>,
}

impl BlockStructure {
    /// Connected components of the union sparsity pattern of `ops`.
    pub fn from_operators(dim: usize, ops: &[&Operator]) -> Self {
        let mut parent: Vec<usize> = (0..dim).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for op in ops {
            assert_eq!(op.dim(), dim, "operator dimension mismatch");
            for r in 0..dim {
                for c in 0..dim {
                    if r != c && op.get(r, c) != ZERO {
                        let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let mut root_block = vec![usize::MAX; dim];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut owner = vec![(0, 0); dim];
        for i in 0..dim {
            let root = find(&mut parent, i);
            if root_block[root] == usize::MAX {
                root_block[root] = blocks.len();
                blocks.push(Vec::new());
            }
            let b = root_block[root];
            owner[i] = (b, blocks[b].len());
            blocks[b].push(i);
        }
        Self { dim, blocks, owner }
    }

    /// A single block covering the whole space.
    pub fn trivial(dim: usize) -> Self {
        Self { dim, blocks: vec![(0..dim).collect()], owner: (0..dim).map(|i| (0, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// `(block, position within block)` of a basis index.
    pub fn owner(&self, index: usize) -> (usize, usize) {
        self.owner[index]
    }

    /// Diagonal blocks of `op`; entries coupling different blocks are dropped.
    pub fn restrict(self: &Arc<Self>, op: &Operator) -> BlockDiag {
        let blocks =
            self.blocks.iter().map(|idx| Operator::from_fn(idx.len(), |r, c| op.get(idx[r], idx[c]))).collect();
        BlockDiag { structure: Arc::clone(self), blocks }
    }

    /// Largest modulus among entries of `op` that couple different blocks.
    pub fn leakage(&self, op: &Operator) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                if self.owner[r].0 != self.owner[c].0 {
                    worst = worst.max(op.get(r, c).norm());
                }
            }
        }
        worst
    }
}

/// Block-diagonal operator over a shared [`BlockStructure`].
#[derive(Clone, Debug)]
pub struct BlockDiag {
    structure: Arc<BlockStructure>,
    blocks: Vec<Operator>,
}

impl BlockDiag {
    pub fn identity(structure: &Arc<BlockStructure>) -> Self {
        let blocks = structure.blocks.iter().map(|b| Operator::identity(b.len())).collect();
        Self { structure: Arc::clone(structure), blocks }
    }

    pub fn from_blocks(structure: &Arc<BlockStructure>, blocks: Vec<Operator>) -> Self {
        assert_eq!(blocks.len(), structure.blocks.len());
        for (b, idx) in blocks.iter().zip(&structure.blocks) {
            assert_eq!(b.dim(), idx.len());
        }
        Self { structure: Arc::clone(structure), blocks }
    }

    pub fn structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn blocks(&self) -> &[Operator] {
        &self.blocks
    }

    pub fn map_blocks(&self, f: impl Fn(&Operator) -> Operator) -> Self {
        Self { structure: Arc::clone(&self.structure), blocks: self.blocks.iter().map(f).collect() }
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &BlockDiag) -> BlockDiag {
        let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a.matmul(b)).collect();
        BlockDiag { structure: Arc::clone(&self.structure), blocks }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let (br, ir) = self.structure.owner[row];
        let (bc, ic) = self.structure.owner[col];
        if br == bc {
            self.blocks[br].get(ir, ic)
        } else {
            ZERO
        }
    }

    /// `y = self · x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        for (block, idx) in self.blocks.iter().zip(&self.structure.blocks) {
            let n = idx.len();
            let data = block.data();
            for (r, &gr) in idx.iter().enumerate() {
                let row = &data[r * n..(r + 1) * n];
                y[gr] = row.iter().zip(idx).map(|(&a, &gc)| a * x[gc]).sum();
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    /// Row vector times operator: `y = x · self`.
    pub fn apply_left_into(&self, x: &[C64], y: &mut [C64]) {
        for (block, idx) in self.blocks.iter().zip(&self.structure.blocks) {
            let n = idx.len();
            let data = block.data();
            for (c, &gc) in idx.iter().enumerate() {
                y[gc] = idx.iter().enumerate().map(|(r, &gr)| x[gr] * data[r * n + c]).sum();
            }
        }
    }

    /// `y = self · x · self†` for a dense square `x` (row-major, full dimension).
    pub fn conjugate_into(&self, x: &[C64], scratch: &mut [C64], y: &mut [C64]) {
        let dim = self.structure.dim;
        // scratch = self · x
        for (block, idx) in self.blocks.iter().zip(&self.structure.blocks) {
            let n = idx.len();
            let data = block.data();
            for (r, &gr) in idx.iter().enumerate() {
                let out = &mut scratch[gr * dim..(gr + 1) * dim];
                out.fill(ZERO);
                for (k, &gk) in idx.iter().enumerate() {
                    let a = data[r * n + k];
                    if a == ZERO {
                        continue;
                    }
                    for (o, &v) in out.iter_mut().zip(&x[gk * dim..(gk + 1) * dim]) {
                        *o += a * v;
                    }
                }
            }
        }
        // y = scratch · self†, i.e. y[r][gc] = Σ_k scratch[r][gk] conj(U[gc][gk])
        for (block, idx) in self.blocks.iter().zip(&self.structure.blocks) {
            let n = idx.len();
            let data = block.data();
            for r in 0..dim {
                let row = &scratch[r * dim..(r + 1) * dim];
                for (c, &gc) in idx.iter().enumerate() {
                    let u_row = &data[c * n..(c + 1) * n];
                    y[r * dim + gc] = idx.iter().zip(u_row).map(|(&gk, u)| row[gk] * u.conj()).sum();
                }
            }
        }
    }

    pub fn to_dense(&self) -> Operator {
        let dim = self.structure.dim;
        let mut out = Operator::zeros(dim);
        for (block, idx) in self.blocks.iter().zip(&self.structure.blocks) {
            for (r, &gr) in idx.iter().enumerate() {
                for (c, &gc) in idx.iter().enumerate() {
                    out.set(gr, gc, block.get(r, c));
                }
            }
        }
        out
    }

    pub fn spectral_norm(&self) -> f64 {
        self.blocks.iter().map(Operator::spectral_norm).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &BlockDiag) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a - b).max_norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(Operator::is_finite)
    }
}
