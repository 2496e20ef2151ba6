//! Dense complex operator algebra for truncated bosonic and atomic Hilbert
//! spaces.
//!
//! System dimensions in this crate stay below a few hundred, so operators are
//! stored as dense row-major matrices. A compressed-row view
//! ([`SparseOperator`]) is provided for the hot loops that apply fixed jump
//! operators to vectors.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest Hilbert-space dimension accepted by [`tensor`].
pub const MAX_DIM: usize = 1 << 12;

/// Square complex matrix acting on a finite-dimensional Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = ONE;
        }
        op
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Builds an operator from row-major entries.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(invalid(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// `|ket⟩⟨bra|` on basis states.
    pub fn outer(dim: usize, ket: usize, bra: usize) -> Self {
        let mut op = Self::zeros(dim);
        op.data[ket * dim + bra] = ONE;
        op
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| self.data[c * n + r].conj())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&x| x * factor).collect() }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&x| x * factor).collect() }
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            let row = &self.data[r * n..(r + 1) * n];
            let out_row = &mut out[r * n..(r + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: n, data: out }
    }

    pub fn commutator(&self, rhs: &Operator) -> Operator {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    /// `y = self · x` for raw amplitude slices.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * n..(r + 1) * n];
            *out = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut out = vec![ZERO; self.dim];
        self.apply_into(&psi.amps, &mut out);
        StateVector { amps: out }
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|c| (0..n).map(|r| self.data[r * n + c].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim;
        (0..n).all(|r| (r..n).all(|c| (self.get(r, c) - self.get(c, r).conj()).norm() <= tol))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        m.singular_values().max()
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Hermitian part `(X + X†)/2` and anti-Hermitian generator `(X − X†)/2i`.
    pub fn hermitian_parts(&self) -> (Operator, Operator) {
        let adj = self.adjoint();
        let herm = (self + &adj).scale_real(0.5);
        let anti = (self - &adj).scale(C64::new(0.0, -0.5));
        (herm, anti)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        Operator { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        Operator { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

/// Lowering operator truncated at `n_max` excitations: `⟨n−1|a|n⟩ = √n`.
pub fn destroy(n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(invalid("destroy: excitation cutoff n_max must be >= 1"));
    }
    let dim = n_max + 1;
    let mut op = Operator::zeros(dim);
    for n in 1..dim {
        op.set(n - 1, n, C64::new((n as f64).sqrt(), 0.0));
    }
    Ok(op)
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim)
}

pub fn adjoint(x: &Operator) -> Operator {
    x.adjoint()
}

/// Kronecker product; the first factor is the slow index.
pub fn tensor(x: &Operator, y: &Operator) -> Result<Operator> {
    let dim = x
        .dim
        .checked_mul(y.dim)
        .filter(|&d| d <= MAX_DIM)
        .ok_or_else(|| invalid(format!("tensor: dimension {}x{} too large", x.dim, y.dim)))?;
    let ny = y.dim;
    Ok(Operator::from_fn(dim, |r, c| x.get(r / ny, c / ny) * y.get(r % ny, c % ny)))
}

/// Complex state vector; norms shrink under non-Hermitian evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { amps: vec![ZERO; dim] }
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(invalid(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { amps })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    #[inline]
    pub fn get(&self, i: usize) -> C64 {
        self.amps[i]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { amps: self.amps.iter().map(|&a| a * factor).collect() }
    }
}

#[inline]
pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Compressed-row copy of an operator holding only its nonzero entries.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOperator {
    pub fn from_dense(op: &Operator) -> Self {
        let n = op.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            for c in 0..n {
                let v = op.get(r, c);
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim: n, row_ptr, cols, vals }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = self · x`.
    #[inline]
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// `y += factor · self · x`.
    #[inline]
    pub fn apply_add(&self, factor: C64, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out += factor * acc;
        }
    }

    /// Row-wise iteration over `(row, col, value)` triples.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim)
            .flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ket(dim: usize, i: usize) -> StateVector {
        StateVector::basis(dim, i).unwrap()
    }

    #[test]
    fn destroy_lowers_single_excitation() {
        let a = destroy(1).unwrap();
        assert_eq!(a.apply(&ket(2, 1)), ket(2, 0));
        assert_eq!(a.apply(&ket(2, 0)), StateVector::zeros(2));
    }

    #[test]
    fn destroy_ladder_rule() {
        let a = destroy(2).unwrap();
        let out = a.apply(&ket(3, 2));
        assert!((out.get(1) - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(out.get(0), ZERO);
        assert_eq!(out.get(2), ZERO);
    }

    #[test]
    fn destroy_rejects_zero_cutoff() {
        assert!(matches!(destroy(0), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn two_level_commutator_is_diag_one_minus_one() {
        let a = destroy(1).unwrap();
        let comm = a.commutator(&a.adjoint());
        let expected = Operator::from_fn(2, |r, c| match (r, c) {
            (0, 0) => ONE,
            (1, 1) => -ONE,
            _ => ZERO,
        });
        assert_eq!(comm, expected);
    }

    #[test]
    fn truncated_commutator_matches_closed_form() {
        for n_max in 1..8 {
            let a = destroy(n_max).unwrap();
            let comm = a.commutator(&a.adjoint());
            let expected = Operator::from_fn(n_max + 1, |r, c| {
                if r != c {
                    ZERO
                } else if r < n_max {
                    ONE
                } else {
                    C64::new(-(n_max as f64), 0.0)
                }
            });
            let diff = (&comm - &expected).max_norm();
            assert!(diff <= 1e-12 * expected.max_norm(), "n_max={n_max}: {diff}");
        }
    }

    #[test]
    fn adjoint_of_destroy_raises() {
        let ad = destroy(1).unwrap().adjoint();
        assert_eq!(ad.apply(&ket(2, 0)), ket(2, 1));
        assert_eq!(Operator::identity(3).adjoint(), Operator::identity(3));
    }

    #[test]
    fn tensor_acts_on_first_factor() {
        let a1 = tensor(&destroy(1).unwrap(), &identity(2)).unwrap();
        // |1,0⟩ has index 1*2 + 0
        assert_eq!(a1.apply(&ket(4, 2)), ket(4, 0));
        assert_eq!(a1.dim(), 4);
    }

    #[test]
    fn tensor_rejects_oversized_product() {
        let big = Operator::identity(MAX_DIM);
        assert!(tensor(&big, &Operator::identity(2)).is_err());
    }

    #[test]
    fn pair_interaction_conserves_number_difference() {
        let n_max = 4;
        let a = destroy(n_max).unwrap();
        let id = identity(n_max + 1);
        let a1 = tensor(&a, &id).unwrap();
        let a2 = tensor(&id, &a).unwrap();
        let n1 = a1.adjoint().matmul(&a1);
        let n2 = a2.adjoint().matmul(&a2);
        let diff = &n1 - &n2;
        let coupling = &a1.matmul(&a2) + &a1.adjoint().matmul(&a2.adjoint());
        let comm = diff.commutator(&coupling);
        assert!(comm.max_norm() <= 1e-12 * coupling.max_norm());
    }

    #[test]
    fn sparse_apply_matches_dense() {
        let a = tensor(&destroy(3).unwrap(), &destroy(2).unwrap().adjoint()).unwrap();
        let sp = SparseOperator::from_dense(&a);
        let x: Vec<C64> = (0..a.dim()).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let mut y1 = vec![ZERO; a.dim()];
        let mut y2 = vec![ZERO; a.dim()];
        a.apply_into(&x, &mut y1);
        sp.apply_into(&x, &mut y2);
        assert_eq!(y1, y2);
        assert!(sp.nnz() < a.dim() * a.dim());
    }

    fn arb_operator(dim: usize) -> impl Strategy<Value = Operator> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |v| {
            Operator::from_row_major(dim, v.into_iter().map(|(re, im)| C64::new(re, im)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn adjoint_is_an_involution(x in arb_operator(3)) {
            prop_assert_eq!(x.adjoint().adjoint(), x);
        }

        #[test]
        fn tensor_is_associative(x in arb_operator(2), y in arb_operator(2), z in arb_operator(3)) {
            let left = tensor(&tensor(&x, &y).unwrap(), &z).unwrap();
            let right = tensor(&x, &tensor(&y, &z).unwrap()).unwrap();
            prop_assert!((&left - &right).max_norm() <= 1e-12 * left.max_norm().max(1.0));
        }

        #[test]
        fn tensor_dimension_multiplies(x in arb_operator(2), y in arb_operator(3)) {
            prop_assert_eq!(tensor(&x, &y).unwrap().dim(), 6);
        }
    }
}
