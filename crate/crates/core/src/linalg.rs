//! Dense complex Hermitian operators on tensor-factored spaces.
//!
//! Every operator carries the ordered list of its subsystem dimensions so that
//! partial traces and subsystem permutations can be addressed by index. All
//! spectral routines symmetrize their input as `(A + A*)/2` first; long MMW
//! runs otherwise accumulate asymmetric rounding drift.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative threshold above which an eigenvalue counts as positive.
pub const POSITIVE_EIGEN_THRESHOLD: f64 = 1e-12;

const HERMITICITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TensoredHermitian {
    dims: Vec<usize>,
    mat: CMatrix,
}

/// Spectral decomposition with eigenvalues sorted from largest to smallest.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    pub values: Vec<f64>,
    /// Unitary whose `i`-th column is the eigenvector of `values[i]`.
    pub vectors: CMatrix,
    dims: Vec<usize>,
}

impl TensoredHermitian {
    /// Wraps `mat` after checking its side against `dims` and symmetrizing it.
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        check_dims(&dims)?;
        let side: usize = dims.iter().product();
        if mat.nrows() != side || mat.ncols() != side {
            return Err(Error::dims(format!(
                "matrix is {}x{} but subsystem dims {:?} require side {}",
                mat.nrows(),
                mat.ncols(),
                dims,
                side
            )));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator entries".into()));
        }
        Ok(Self::from_raw(dims, mat))
    }

    /// Like [`TensoredHermitian::new`] but rejects inputs whose anti-Hermitian
    /// part exceeds `1e-12` relative to the largest entry.
    pub fn new_strict(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let scale = mat.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let skew = (&mat - mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if skew > HERMITICITY_TOLERANCE * scale * 2.0 {
            return Err(Error::param(format!(
                "matrix is not Hermitian (deviation {skew:.3e})"
            )));
        }
        Self::new(dims, mat)
    }

    pub(crate) fn from_raw(dims: Vec<usize>, mat: CMatrix) -> Self {
        let mat = symmetrized(mat);
        Self { dims, mat }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let side = dims.iter().product();
        Self {
            dims,
            mat: CMatrix::zeros(side, side),
        }
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let side = dims.iter().product();
        Self {
            dims,
            mat: CMatrix::identity(side, side),
        }
    }

    /// Diagonal operator with the given real entries on a single subsystem.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mat = CMatrix::from_diagonal(&CVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| C64::new(x, 0.0)),
        ));
        Self {
            dims: vec![diag.len()],
            mat,
        }
    }

    /// Rank-one operator `v v*` (not normalized).
    pub fn outer(dims: Vec<usize>, v: &CVector) -> Result<Self> {
        Self::new(dims, v * v.adjoint())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    /// Same matrix, different factorization of its side.
    pub fn with_dims(self, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        if dims.iter().product::<usize>() != self.side() {
            return Err(Error::dims(format!(
                "cannot relabel side {} as {:?}",
                self.side(),
                dims
            )));
        }
        Ok(Self {
            dims,
            mat: self.mat,
        })
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    /// Hilbert–Schmidt inner product `tr(A* B)`, real for Hermitian operands.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.side() != other.side() {
            return Err(Error::dims(format!(
                "inner product of sides {} and {}",
                self.side(),
                other.side()
            )));
        }
        Ok(hs_inner(&self.mat, &other.mat))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            mat: &self.mat - &other.mat,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            mat: &self.mat * C64::new(factor, 0.0),
        }
    }

    /// `self + shift * I`.
    pub fn shift(&self, shift: f64) -> Self {
        let mut mat = self.mat.clone();
        for i in 0..mat.nrows() {
            mat[(i, i)].re += shift;
        }
        Self {
            dims: self.dims.clone(),
            mat,
        }
    }

    pub(crate) fn add_assign_scaled(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.side(), other.side());
        self.mat.zip_apply(&other.mat, |a, b| *a += b * factor);
    }

    /// Kronecker product; dims are concatenated.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            dims,
            mat: self.mat.kronecker(&other.mat),
        }
    }

    /// Traces out the subsystem at `index`; the remaining dims keep their order.
    pub fn partial_trace(&self, index: usize) -> Result<Self> {
        if index >= self.dims.len() {
            return Err(Error::SubsystemOutOfRange {
                index,
                count: self.dims.len(),
            });
        }
        let left: usize = self.dims[..index].iter().product();
        let mid = self.dims[index];
        let right: usize = self.dims[index + 1..].iter().product();
        let out = left * right;
        let mut mat = CMatrix::zeros(out, out);
        for l in 0..left {
            for r in 0..right {
                let row = l * right + r;
                for l2 in 0..left {
                    for r2 in 0..right {
                        let col = l2 * right + r2;
                        let mut acc = C64::new(0.0, 0.0);
                        for m in 0..mid {
                            acc +=
                                self.mat[((l * mid + m) * right + r, (l2 * mid + m) * right + r2)];
                        }
                        mat[(row, col)] = acc;
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims.remove(index);
        if dims.is_empty() {
            dims.push(1);
        }
        Ok(Self::from_raw(dims, mat))
    }

    /// Traces out every subsystem not listed in `keep` (indices ascending).
    pub fn reduce_to(&self, keep: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for index in (0..self.dims.len()).rev() {
            if !keep.contains(&index) {
                out = out.partial_trace(index)?;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`TensoredHermitian::partial_trace`]: inserts an identity
    /// factor of side `dim` so that it becomes subsystem `index` of the result.
    pub fn embed_identity(&self, index: usize, dim: usize) -> Result<Self> {
        let n = self.dims.len();
        if index > n {
            return Err(Error::SubsystemOutOfRange {
                index,
                count: n + 1,
            });
        }
        if dim == 0 {
            return Err(Error::dims("identity factor of side 0"));
        }
        let lifted = Self::identity(vec![dim]).tensor(self);
        if index == 0 {
            return Ok(lifted);
        }
        let order: Vec<usize> = (1..=index)
            .chain(std::iter::once(0))
            .chain(index + 1..=n)
            .collect();
        lifted.permute(&order)
    }

    /// Reorders tensor factors: factor `j` of the result is factor `order[j]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let map = permutation_map(&self.dims, order)?;
        let side = self.side();
        let mat = CMatrix::from_fn(side, side, |i, j| self.mat[(map[i], map[j])]);
        let dims = order.iter().map(|&k| self.dims[k]).collect();
        Ok(Self { dims, mat })
    }

    /// `U A U*`; `U` must be square of matching side.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.side() || u.ncols() != self.side() {
            return Err(Error::dims(format!(
                "conjugating side {} by {}x{}",
                self.side(),
                u.nrows(),
                u.ncols()
            )));
        }
        Ok(Self::from_raw(
            self.dims.clone(),
            u * &self.mat * u.adjoint(),
        ))
    }

    pub fn eig(&self) -> EigDecomposition {
        let (values, vectors) = hermitian_eigen(&self.mat);
        EigDecomposition {
            values,
            vectors,
            dims: self.dims.clone(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eig().values
    }

    /// Matrix exponential through the eigendecomposition.
    pub fn exp(&self) -> Self {
        self.eig().map(f64::exp)
    }

    /// Projector onto the eigenvectors with eigenvalue above
    /// `1e-12 * max(1, ||A||_inf)` together with the sum of positive eigenvalues.
    pub fn positive_projection(&self) -> (Self, f64) {
        self.eig().positive_projection()
    }

    pub fn positive_trace(&self) -> f64 {
        self.eigenvalues().iter().filter(|&&l| l > 0.0).sum()
    }

    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.abs()).sum()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|l| l.abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry; cheap proxy used in tolerance checks.
    pub fn max_abs_entry(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.side() != other.side() {
            return Err(Error::dims(format!(
                "operands of sides {} and {}",
                self.side(),
                other.side()
            )));
        }
        Ok(())
    }
}

impl EigDecomposition {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `U f(Λ) U*`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> TensoredHermitian {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let w = f(l);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        TensoredHermitian::from_raw(self.dims.clone(), scaled * self.vectors.adjoint())
    }

    pub fn reconstruct(&self) -> TensoredHermitian {
        self.map(|l| l)
    }

    pub fn positive_threshold(&self) -> f64 {
        let norm = self.values.iter().map(|l| l.abs()).fold(0.0, f64::max);
        POSITIVE_EIGEN_THRESHOLD * norm.max(1.0)
    }

    pub fn positive_projection(&self) -> (TensoredHermitian, f64) {
        let tau = self.positive_threshold();
        let projector = self.map(|l| if l > tau { 1.0 } else { 0.0 });
        let positive_trace = self.values.iter().filter(|&&l| l > 0.0).sum();
        (projector, positive_trace)
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn bottom_vector(&self) -> CVector {
        self.vectors.column(self.values.len() - 1).into_owned()
    }

    pub fn top_vector(&self) -> CVector {
        self.vectors.column(0).into_owned()
    }
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::dims(format!(
            "subsystem dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

pub(crate) fn symmetrized(mut mat: CMatrix) -> CMatrix {
    let n = mat.nrows();
    for i in 0..n {
        mat[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (mat[(i, j)] + mat[(j, i)].conj()) * 0.5;
            mat[(i, j)] = avg;
            mat[(j, i)] = avg.conj();
        }
    }
    mat
}

pub(crate) fn hs_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Index map for a subsystem permutation: `map[new] = old`.
pub(crate) fn permutation_map(dims: &[usize], order: &[usize]) -> Result<Vec<usize>> {
    let n = dims.len();
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::param(format!(
            "permutation {order:?} for {n} subsystems"
        )));
    }
    for &k in order {
        if k >= n || seen[k] {
            return Err(Error::param(format!(
                "{order:?} is not a permutation of 0..{n}"
            )));
        }
        seen[k] = true;
    }
    let side: usize = dims.iter().product();
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut old_strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        old_strides[k] = old_strides[k + 1] * dims[k + 1];
    }
    let mut map = Vec::with_capacity(side);
    let mut digits = vec![0usize; n];
    for _ in 0..side {
        map.push(
            digits
                .iter()
                .zip(order)
                .map(|(&d, &k)| d * old_strides[k])
                .sum(),
        );
        for pos in (0..n).rev() {
            digits[pos] += 1;
            if digits[pos] < new_dims[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(map)
}

/// Hermitian eigensolver on the symmetrized input; eigenvalues descending.
pub(crate) fn hermitian_eigen(mat: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = mat.nrows();
    match n {
        0 => (Vec::new(), CMatrix::zeros(0, 0)),
        1 => (vec![mat[(0, 0)].re], CMatrix::identity(1, 1)),
        2 => eigen_2x2(mat),
        _ => {
            let eig = SymmetricEigen::new(symmetrized(mat.clone()));
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
            (values, vectors)
        }
    }
}

fn eigen_2x2(mat: &CMatrix) -> (Vec<f64>, CMatrix) {
    let a = mat[(0, 0)].re;
    let d = mat[(1, 1)].re;
    let b = (mat[(0, 1)] + mat[(1, 0)].conj()) * 0.5;
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(b.norm());
    let hi = 0.5 * (a + d) + radius;
    let lo = 0.5 * (a + d) - radius;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if b.norm() == 0.0 {
        return if a >= d {
            (vec![a, d], CMatrix::identity(2, 2))
        } else {
            (
                vec![d, a],
                CMatrix::from_row_slice(2, 2, &[zero, one, one, zero]),
            )
        };
    }
    // Top eigenvector from the better-conditioned row of (A - hi I).
    let (v0, v1) = if half_diff >= 0.0 {
        (C64::new(radius + half_diff, 0.0), b.conj())
    } else {
        (b, C64::new(radius - half_diff, 0.0))
    };
    let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    let (t0, t1) = (v0 / norm, v1 / norm);
    let vectors = CMatrix::from_row_slice(2, 2, &[t0, -t1.conj(), t1, t0.conj()]);
    (vec![hi, lo], vectors)
}
