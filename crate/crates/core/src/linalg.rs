//! Direct solvers for the nonsymmetric coupled systems of one Picard update.
//!
//! Two backends share one interface: a band LU with partial pivoting for 1D
//! meshes (interleaved unknowns give a band of width 3 on either side) and a
//! fill-reducing sparse LU from `faer` for 2D meshes.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Band LU, `O(n (kl + ku) kl)` work. Suited to 1D.
    Banded,
    /// Supernodal/simplicial sparse LU with COLAMD ordering.
    SparseLu,
}

impl Backend {
    /// Band for 1D meshes, sparse LU otherwise.
    pub fn for_dim(dim: usize) -> Self {
        if dim == 1 {
            Backend::Banded
        } else {
            Backend::SparseLu
        }
    }
}

/// LAPACK-style (`gbtrf`) band LU with partial pivoting, column-major band
/// storage with `kl` extra rows for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // row kv + i - j of column j
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    /// Loads `a` into band storage and factors it in place.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        assert_eq!(a.nrows(), self.n);
        self.ab.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            for (j, v) in a.row(i) {
                if j + self.kl < i || j > i + self.ku {
                    return Err(Error::Solver(format!("entry ({i}, {j}) outside the band")));
                }
                let p = self.idx(i, j);
                self.ab[p] += v;
            }
        }
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for r in 1..=km {
                let v = self.ab[self.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Solver(format!("zero or non-finite pivot in column {j}")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (p, q) = (self.idx(j, c), self.idx(j + jp, c));
                    self.ab.swap(p, q);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for r in 1..=km {
                let p = self.idx(j + r, j);
                self.ab[p] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = self.ab[self.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for r in 1..=km {
                    let l = self.ab[self.idx(j + r, j)];
                    let p = self.idx(j + r, c);
                    self.ab[p] -= l * ujc;
                }
            }
            debug_assert!(ju <= j + kv);
        }
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factors.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= self.ab[self.idx(j + r, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[self.idx(i, j)] * bj;
            }
        }
    }
}

/// Sparse LU via `faer`. The CSR arrays of `A` are handed to `faer` as the
/// CSC arrays of `A^T`; solves then use the transposed factorization.
pub struct SparseLu {
    n: usize,
    pattern: std::sync::Arc<Pattern>,
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
    factored: bool,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).field("factored", &self.factored).finish()
    }
}

impl SparseLu {
    pub fn new(pattern: std::sync::Arc<Pattern>) -> Result<Self> {
        let n = pattern.nrows();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, pattern.row_ptr(), None, pattern.col_idx());
        let symbolic = factorize_symbolic_lu(sym, Default::default())
            .map_err(|e| Error::Solver(format!("symbolic LU: {e:?}")))?;
        Ok(Self {
            n,
            pattern,
            symbolic,
            numeric: NumericLu::new(),
            factored: false,
        })
    }

    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        if !std::sync::Arc::ptr_eq(a.pattern(), &self.pattern) && **a.pattern() != *self.pattern {
            return Err(Error::Solver("matrix pattern differs from the analysed one".into()));
        }
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            self.pattern.row_ptr(),
            None,
            self.pattern.col_idx(),
        );
        let mat = SparseColMatRef::new(sym, a.values());
        let par = Par::Seq;
        let mut mem = MemBuffer::new(self.symbolic.factorize_numeric_lu_scratch::<f64>(par, Default::default()));
        self.factored = false;
        self.symbolic
            .factorize_numeric_lu(&mut self.numeric, mat, par, MemStack::new(&mut mem), Default::default())
            .map_err(|e| Error::Solver(format!("numeric LU: {e:?}")))?;
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "solve before factor");
        let par = Par::Seq;
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        lu.solve_transpose_in_place_with_conj(Conj::No, rhs, par, MemStack::new(&mut mem));
    }
}

#[derive(Debug)]
enum Inner {
    Band(BandLu),
    Sparse(Box<SparseLu>),
}

/// A direct solver bound to one sparsity pattern.
#[derive(Debug)]
pub struct LinearSolver {
    inner: Inner,
    max_refinements: usize,
}

/// Outcome of [`LinearSolver::solve_refined`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    /// `||b - A x|| / ||b||` (Euclidean, per component), absolute where `b = 0`.
    pub relative_residual: f64,
    pub refinements: usize,
}

impl LinearSolver {
    pub fn new(pattern: std::sync::Arc<Pattern>, backend: Backend) -> Result<Self> {
        let inner = match backend {
            Backend::Banded => {
                let (kl, ku) = pattern.bandwidth();
                Inner::Band(BandLu::new(pattern.nrows(), kl, ku))
            }
            Backend::SparseLu => Inner::Sparse(Box::new(SparseLu::new(pattern)?)),
        };
        Ok(Self {
            inner,
            max_refinements: 3,
        })
    }

    pub fn backend(&self) -> Backend {
        match self.inner {
            Inner::Band(_) => Backend::Banded,
            Inner::Sparse(_) => Backend::SparseLu,
        }
    }

    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        match &mut self.inner {
            Inner::Band(lu) => lu.factor(a),
            Inner::Sparse(lu) => lu.factor(a),
        }
    }

    /// Solves with the current factors, in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        match &self.inner {
            Inner::Band(lu) => lu.solve(b),
            Inner::Sparse(lu) => lu.solve(b),
        }
    }

    /// Factors `a`, solves `a x = b` and applies iterative refinement until
    /// the relative residual is at most `rtol` (or the refinement budget runs
    /// out). With `stride > 1` the unknowns are taken as `stride` interleaved
    /// components and the residual is the largest per-component relative one.
    pub fn solve_refined(
        &mut self,
        a: &CsrMatrix,
        b: &[f64],
        rtol: f64,
        stride: usize,
    ) -> Result<(Vec<f64>, SolveStats)> {
        self.factor(a)?;
        let stride = stride.max(1);
        let scales: Vec<f64> = (0..stride)
            .map(|c| {
                let s = strided_norm(b, c, stride);
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let mut r = vec![0.0; b.len()];
        let mut refinements = 0;
        loop {
            a.mul_vec(&x, &mut r);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
            let rel = (0..stride)
                .map(|c| strided_norm(&r, c, stride) / scales[c])
                .fold(0.0, f64::max);
            if !rel.is_finite() {
                return Err(Error::Solver("non-finite residual".into()));
            }
            if rel <= rtol || refinements == self.max_refinements {
                return Ok((
                    x,
                    SolveStats {
                        relative_residual: rel,
                        refinements,
                    },
                ));
            }
            self.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
            refinements += 1;
        }
    }
}

fn strided_norm(v: &[f64], offset: usize, stride: usize) -> f64 {
    v.iter().skip(offset).step_by(stride).map(|x| x * x).sum::<f64>().sqrt()
}
