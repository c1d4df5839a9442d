//! Seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, TensoredHermitian, C64};
use crate::qip2::{Promise, Qip2Instance};
use crate::qmam::QmamInstance;
use crate::qrg2::Qrg2Instance;
use crate::states::PureState;

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Normalized complex Gaussian vector.
pub fn random_pure_state(dims: Vec<usize>, rng: &mut impl Rng) -> Result<PureState> {
    let side: usize = dims.iter().product();
    loop {
        let v = CVector::from_fn(side, |_, _| gaussian(rng));
        if v.norm() > 1e-8 {
            return PureState::new(dims, v);
        }
    }
}

/// `G* G` for a complex Gaussian `G`, divided by its largest eigenvalue.
pub fn random_measurement(dims: Vec<usize>, rng: &mut impl Rng) -> Result<TensoredHermitian> {
    let side: usize = dims.iter().product();
    let g = CMatrix::from_fn(side, side, |_, _| gaussian(rng));
    let gram = TensoredHermitian::new(dims, g.adjoint() * g)?;
    let top = gram.eigenvalues()[0];
    Ok(gram.scale(1.0 / top))
}

/// Random Hermitian with Gaussian entries (GUE up to scale).
pub fn random_hermitian(dims: Vec<usize>, rng: &mut impl Rng) -> Result<TensoredHermitian> {
    let side: usize = dims.iter().product();
    let g = CMatrix::from_fn(side, side, |_, _| gaussian(rng));
    TensoredHermitian::new(dims, (&g + g.adjoint()) * C64::new(0.5, 0.0))
}

/// Random mixed state `G G* / tr` with `G` of the given column count.
pub fn random_density(
    dims: Vec<usize>,
    rank: usize,
    rng: &mut impl Rng,
) -> Result<crate::states::DensityOperator> {
    let side: usize = dims.iter().product();
    if rank == 0 {
        return Err(Error::param("rank 0"));
    }
    let g = CMatrix::from_fn(side, rank, |_, _| gaussian(rng));
    let w = TensoredHermitian::new(dims, &g * g.adjoint())?;
    let tr = w.trace();
    crate::states::DensityOperator::new(w.scale(1.0 / tr))
}

fn check_positive(name: &str, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::dims(format!("{name} must be at least 1")));
    }
    Ok(())
}

pub fn gen_qip2(message_dim: usize, verifier_dim: usize, seed: u64) -> Result<Qip2Instance> {
    check_positive("message dim", message_dim)?;
    check_positive("verifier dim", verifier_dim)?;
    let mut rng = rng_from_seed(seed);
    let dims = vec![message_dim, verifier_dim];
    let initial = random_pure_state(dims.clone(), &mut rng)?;
    let measurement = random_measurement(dims, &mut rng)?;
    Qip2Instance::new(message_dim, verifier_dim, initial, measurement, None)
}

/// Measurement on `A ⊗ X ⊗ Y` with `A` a qubit.
pub fn gen_qmam(x_dim: usize, y_dim: usize, seed: u64) -> Result<QmamInstance> {
    check_positive("x dim", x_dim)?;
    check_positive("y dim", y_dim)?;
    let mut rng = rng_from_seed(seed);
    let measurement = random_measurement(vec![2, x_dim, y_dim], &mut rng)?;
    QmamInstance::new(x_dim, y_dim, measurement, Promise::new(0.9, 0.1)?)
}

/// `dims = [V_Y, Y, V_N, N]`.
pub fn gen_qrg2(dims: [usize; 4], seed: u64) -> Result<Qrg2Instance> {
    for (name, &d) in ["V_Y", "Y", "V_N", "N"].iter().zip(dims.iter()) {
        check_positive(name, d)?;
    }
    let mut rng = rng_from_seed(seed);
    let yes_state = random_pure_state(vec![dims[0], dims[1]], &mut rng)?;
    let no_state = random_pure_state(vec![dims[2], dims[3]], &mut rng)?;
    let measurement = random_measurement(dims.to_vec(), &mut rng)?;
    Qrg2Instance::new(
        dims,
        yes_state,
        no_state,
        measurement,
        Promise::new(0.9, 0.1)?,
    )
}

/// `scale * R + offset * I`; optimal acceptance probabilities transform the same way.
pub fn affine_measurement(
    r: &TensoredHermitian,
    scale: f64,
    offset: f64,
) -> Result<TensoredHermitian> {
    if !(scale > 0.0) || offset < 0.0 || scale + offset > 1.0 + 1e-12 {
        return Err(Error::param(format!(
            "affine map ({scale}, {offset}) does not preserve [0, I]"
        )));
    }
    Ok(r.scale(scale).shift(offset))
}

/// Parameters `(scale, offset)` moving a value known to lie in `[lower, upper]`
/// to at least `target` (when `above`) or at most `target` (otherwise).
pub fn planting_map(lower: f64, upper: f64, target: f64, above: bool) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::param(format!("target {target} outside [0, 1]")));
    }
    if above {
        // (1 - b) lower + b = target, or shrink when already above
        if lower >= target {
            return Ok((1.0, 0.0));
        }
        let b = (target - lower) / (1.0 - lower);
        Ok((1.0 - b, b))
    } else {
        if upper <= 0.0 {
            return Ok((1.0, 0.0));
        }
        Ok(((target / upper).min(1.0), 0.0))
    }
}
