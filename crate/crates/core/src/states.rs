//! Density operators, pure states and the fidelity-matched purification
//! construction used to turn approximately feasible points into exactly
//! feasible ones.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::linalg::{check_dims, permutation_map, CMatrix, CVector, TensoredHermitian, C64};

/// Eigenvalues at or above `-NEGATIVITY_TOLERANCE` are clamped to zero on construction.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;
/// Relative cutoff below which singular values count as zero in pseudo-inverses.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;
/// Relative cutoff on `sqrt(rho1)` when building the purification isometry.
const SUPPORT_CUTOFF: f64 = 1e-7;
const UNIT_NORM_TOLERANCE: f64 = 1e-14;
/// Residue threshold of the channel-existence test.
pub const CHANNEL_TOLERANCE: f64 = 1e-8;

const TRACE_TOLERANCE: f64 = 1e-10;
const PURITY_TOLERANCE: f64 = 1e-8;
const MARGINAL_TOLERANCE: f64 = 1e-8;

/// Positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: TensoredHermitian,
}

impl DensityOperator {
    /// Validates `op` as a density operator. Eigenvalues in `[-1e-10, 0)` are
    /// clamped and a trace within `1e-10` of one is renormalized; anything
    /// further away is rejected.
    pub fn new(op: TensoredHermitian) -> Result<Self> {
        let eig = op.eig();
        let scale = eig.values.iter().map(|l| l.abs()).fold(1.0, f64::max);
        if eig.min() < -NEGATIVITY_TOLERANCE * scale {
            return Err(Error::NotDensity(format!(
                "smallest eigenvalue {:.3e}",
                eig.min()
            )));
        }
        let trace = op.trace();
        if (trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::NotDensity(format!("trace {trace:.12}")));
        }
        if eig.min() < 0.0 {
            Self::project(op)
        } else {
            Ok(Self {
                op: op.scale(1.0 / trace),
            })
        }
    }

    /// Nearest density operator in the sense used for numerical outputs:
    /// negative eigenvalues are dropped and the trace rescaled to one.
    pub fn project(op: TensoredHermitian) -> Result<Self> {
        let eig = op.eig();
        let total: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NotDensity(
                "no positive spectrum to normalize".into(),
            ));
        }
        Ok(Self {
            op: eig.map(|l| l.max(0.0) / total),
        })
    }

    /// Trusted constructor for operators built as `W / tr W` with `W` positive definite.
    pub(crate) fn from_trusted(op: TensoredHermitian) -> Self {
        Self { op }
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let side: usize = dims.iter().product();
        Self {
            op: TensoredHermitian::identity(dims).scale(1.0 / side as f64),
        }
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = &state.amplitudes;
        Self {
            op: TensoredHermitian::from_raw(state.dims.clone(), v * v.adjoint()),
        }
    }

    /// State proportional to `v v*` on a single subsystem of side `v.len()`.
    pub fn from_vector(dims: Vec<usize>, v: &CVector) -> Result<Self> {
        Ok(Self::from_pure(&PureState::new(dims, v.clone())?))
    }

    pub fn op(&self) -> &TensoredHermitian {
        &self.op
    }

    pub fn into_op(self) -> TensoredHermitian {
        self.op
    }

    pub fn dims(&self) -> &[usize] {
        self.op.dims()
    }

    pub fn side(&self) -> usize {
        self.op.side()
    }

    /// `<A, rho>`.
    pub fn expectation(&self, observable: &TensoredHermitian) -> Result<f64> {
        self.op.inner(observable)
    }

    pub fn partial_trace(&self, index: usize) -> Result<Self> {
        Ok(Self {
            op: self.op.partial_trace(index)?,
        })
    }

    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        Ok(Self {
            op: self.op.permute(order)?,
        })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            op: self.op.tensor(&other.op),
        }
    }

    /// Operator square root through the eigendecomposition.
    pub fn sqrt(&self) -> TensoredHermitian {
        self.op.eig().map(|l| l.max(0.0).sqrt())
    }

    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        Ok(0.5 * self.op.sub(&other.op)?.trace_norm())
    }

    /// Convex combination `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &Self, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::param(format!(
                "mixing weight {weight} outside [0, 1]"
            )));
        }
        let op = self.op.scale(1.0 - weight).add(&other.op.scale(weight))?;
        Ok(Self { op })
    }

    /// `(purity, second largest eigenvalue)`; a pure state has the latter near zero.
    pub fn rank_one_defect(&self) -> f64 {
        let values = self.op.eigenvalues();
        values.get(1).copied().unwrap_or(0.0).max(0.0)
    }
}

/// Normalized state vector on a tensor-factored space.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    dims: Vec<usize>,
}

impl PureState {
    /// Normalizes `amplitudes` unless already of unit norm; rejects the zero vector.
    pub fn new(dims: Vec<usize>, amplitudes: CVector) -> Result<Self> {
        check_dims(&dims)?;
        let side: usize = dims.iter().product();
        if amplitudes.len() != side {
            return Err(Error::dims(format!(
                "{} amplitudes for dims {dims:?}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("state vector has zero or non-finite norm"));
        }
        // leave unit vectors untouched so that stored states read back bit for bit
        let amplitudes = if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            amplitudes
        } else {
            amplitudes / C64::new(norm, 0.0)
        };
        Ok(Self { amplitudes, dims })
    }

    /// Pure state from a density operator of rank one (within `1e-8`); higher
    /// rank inputs are rejected.
    pub fn from_density(rho: &DensityOperator) -> Result<Self> {
        let defect = rho.rank_one_defect();
        if defect > PURITY_TOLERANCE {
            return Err(Error::NotPure(defect));
        }
        Ok(Self::top_eigenvector(rho))
    }

    /// Projection of a (possibly mixed) state onto its top eigenvector.
    pub fn top_eigenvector(rho: &DensityOperator) -> Self {
        let v = rho.op().eig().top_vector();
        Self {
            amplitudes: v,
            dims: rho.dims().to_vec(),
        }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }

    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let map = permutation_map(&self.dims, order)?;
        let amplitudes = CVector::from_iterator(map.len(), map.iter().map(|&k| self.amplitudes[k]));
        let dims = order.iter().map(|&k| self.dims[k]).collect();
        Ok(Self { amplitudes, dims })
    }
}

/// Fidelity `||sqrt(P) sqrt(Q)||_1`.
pub fn fidelity(p: &DensityOperator, q: &DensityOperator) -> Result<f64> {
    if p.side() != q.side() {
        return Err(Error::dims(format!(
            "fidelity of sides {} and {}",
            p.side(),
            q.side()
        )));
    }
    let product = p.sqrt().matrix() * q.sqrt().matrix();
    Ok(schatten_one(&product))
}

/// Trace norm of an arbitrary square matrix (sum of singular values).
pub fn schatten_one(mat: &CMatrix) -> f64 {
    mat.clone().singular_values().iter().sum()
}

/// Moore–Penrose pseudo-inverse of `sqrt(p)`; singular values below
/// `1e-10` times the largest are treated as zero.
pub fn pseudo_inverse_sqrt(p: &DensityOperator) -> TensoredHermitian {
    inverse_sqrt_with_cutoff(p, PSEUDO_INVERSE_CUTOFF)
}

fn inverse_sqrt_with_cutoff(p: &DensityOperator, relative: f64) -> TensoredHermitian {
    let eig = p.op().eig();
    let top = eig.max().max(0.0).sqrt();
    let cutoff = relative * top;
    eig.map(|l| {
        let s = l.max(0.0).sqrt();
        if s > cutoff && s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    })
}

/// Extension `sigma2` of `rho2` matching the fidelity of `rho1`, `rho2`.
///
/// `sigma1` lives on a space with one extra subsystem (at `traced_subsystem`)
/// compared to `rho1` and reduces to `rho1` there. The returned operator
/// reduces to `rho2` and has `F(sigma1, sigma2) = F(rho1, rho2)`.
///
/// Construction: the polar unitary `V` makes `sqrt(rho1) sqrt(rho2) V`
/// positive; `sqrt(sigma1)` is read as a vector in `A ⊗ B ⊗ C` with
/// `C = A ⊗ B` and reshaped into `X: B⊗C -> A`; the isometry
/// `U = X* sqrt(rho1)^+` (completed on the kernel of `rho1`) gives the
/// purification `vec(sqrt(rho2) V U*)` whose `C`-marginal is `sigma2`.
pub fn matched_purification(
    rho1: &DensityOperator,
    rho2: &DensityOperator,
    sigma1: &DensityOperator,
    traced_subsystem: usize,
) -> Result<DensityOperator> {
    let n = sigma1.dims().len();
    if traced_subsystem >= n {
        return Err(Error::SubsystemOutOfRange {
            index: traced_subsystem,
            count: n,
        });
    }
    if rho1.side() != rho2.side() {
        return Err(Error::dims(format!(
            "rho1 side {} vs rho2 side {}",
            rho1.side(),
            rho2.side()
        )));
    }
    let marginal = sigma1.partial_trace(traced_subsystem)?;
    if marginal.side() != rho1.side() {
        return Err(Error::dims(format!(
            "sigma1 reduces to side {} but rho1 has side {}",
            marginal.side(),
            rho1.side()
        )));
    }
    let residue = marginal.op().sub(rho1.op())?.trace_norm();
    if residue > MARGINAL_TOLERANCE {
        return Err(Error::Precondition(format!(
            "sigma1 does not reduce to rho1 (trace-norm residue {residue:.3e})"
        )));
    }

    // Move the traced factor last so that sigma1 lives on A ⊗ B.
    let mut order: Vec<usize> = (0..n).filter(|&k| k != traced_subsystem).collect();
    order.push(traced_subsystem);
    let sigma_ab = sigma1.permute(&order)?;
    let da = rho1.side();
    let db = sigma1.dims()[traced_subsystem];
    let dc = da * db;

    let sqrt_rho1 = rho1.sqrt();
    let sqrt_rho2 = rho2.sqrt();
    let polar = polar_unitary(&(sqrt_rho1.matrix() * sqrt_rho2.matrix()));

    // X[a, (b, c)] = sqrt(sigma1)[(a, b), c]
    let sqrt_sigma = sigma_ab.sqrt();
    let x = CMatrix::from_fn(da, db * dc, |a, bc| {
        let (b, c) = (bc / dc, bc % dc);
        sqrt_sigma.matrix()[(a * db + b, c)]
    });
    // Eigenvalues of rho1 at rounding level would pass the plain pseudo-inverse
    // cutoff and blow up; they are treated as kernel here instead.
    let pinv = inverse_sqrt_with_cutoff(rho1, SUPPORT_CUTOFF);
    let partial = x.adjoint() * pinv.matrix();
    let isometry = nearest_isometry(&complete_isometry(partial, rho1)?);

    let y = sqrt_rho2.matrix() * polar * isometry.adjoint();
    // Z[(a, b), c] = Y[a, (b, c)], sigma2 = Z Z*
    let z = CMatrix::from_fn(da * db, dc, |ab, c| {
        let (a, b) = (ab / db, ab % db);
        y[(a, b * dc + c)]
    });
    let sigma2_ab = TensoredHermitian::new(sigma_ab.dims().to_vec(), &z * z.adjoint())?;
    let sigma2_ab = DensityOperator::project(sigma2_ab)?;

    let mut inverse = vec![0; n];
    for (new_pos, &old) in order.iter().enumerate() {
        inverse[old] = new_pos;
    }
    sigma2_ab.permute(&inverse)
}

/// Unitary `V` with `M V` positive semidefinite, from the SVD `M = W S Z*`.
fn polar_unitary(m: &CMatrix) -> CMatrix {
    let svd = SVD::new(m.clone(), true, true);
    let w = svd.u.expect("requested U");
    let z_adj = svd.v_t.expect("requested V^T");
    z_adj.adjoint() * w.adjoint()
}

/// Extends `partial = X* sqrt(rho1)^+`, an isometry on the support of `rho1`,
/// to a full isometry by mapping kernel directions of `rho1` onto an
/// orthonormal complement of its range.
fn complete_isometry(partial: CMatrix, rho1: &DensityOperator) -> Result<CMatrix> {
    let eig = rho1.op().eig();
    let top = eig.max().max(0.0).sqrt();
    let cutoff = SUPPORT_CUTOFF * top;
    let kernel: Vec<usize> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.max(0.0).sqrt() <= cutoff || l <= 0.0)
        .map(|(i, _)| i)
        .collect();
    if kernel.is_empty() {
        return Ok(partial);
    }
    let rows = partial.nrows();
    // Orthonormal basis of the current range (columns of partial restricted to the support).
    let mut basis: Vec<CVector> = Vec::new();
    for j in 0..eig.values.len() {
        if kernel.contains(&j) {
            continue;
        }
        let col = &partial * eig.vectors.column(j);
        push_orthonormal(&mut basis, col);
    }
    let mut out = partial;
    for &k in &kernel {
        let mut fresh = None;
        for e in 0..rows {
            let mut candidate = CVector::zeros(rows);
            candidate[e] = C64::new(1.0, 0.0);
            if let Some(v) = push_orthonormal(&mut basis, candidate) {
                fresh = Some(v);
                break;
            }
        }
        let f =
            fresh.ok_or_else(|| Error::dims("purifying space too small to complete isometry"))?;
        out += &f * eig.vectors.column(k).adjoint();
    }
    Ok(out)
}

/// Polar factor `W Z*` of `M = W S Z*`; removes rounding drift from an almost-isometry.
fn nearest_isometry(m: &CMatrix) -> CMatrix {
    let svd = SVD::new(m.clone(), true, true);
    svd.u.expect("requested U") * svd.v_t.expect("requested V^T")
}

/// Gram–Schmidt step; returns the new unit vector when `v` is independent of `basis`.
fn push_orthonormal(basis: &mut Vec<CVector>, mut v: CVector) -> Option<CVector> {
    for _ in 0..2 {
        for b in basis.iter() {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
    }
    let norm = v.norm();
    if norm < 1e-6 {
        return None;
    }
    let v = v / C64::new(norm, 0.0);
    basis.push(v.clone());
    Some(v)
}

/// Whether a channel acting on factor `subsystem` alone maps the pure state
/// `rho1` to `rho2`; equivalently, tracing out `subsystem` leaves the same
/// operator for both.
pub fn channel_exists(
    rho1: &DensityOperator,
    rho2: &DensityOperator,
    subsystem: usize,
) -> Result<bool> {
    let defect = rho1.rank_one_defect();
    if defect > PURITY_TOLERANCE {
        return Err(Error::NotPure(defect));
    }
    if rho1.dims() != rho2.dims() {
        return Err(Error::dims(format!(
            "dims {:?} vs {:?}",
            rho1.dims(),
            rho2.dims()
        )));
    }
    let r1 = rho1.partial_trace(subsystem)?;
    let r2 = rho2.partial_trace(subsystem)?;
    Ok(r1.op().sub(r2.op())?.trace_norm() <= CHANNEL_TOLERANCE)
}
