//! Reference solvers used to audit the multiplicative-weights results. None of
//! them touches the update engine: equilibrium values come from a smoothed
//! Frank–Wolfe method or a Bloch-ball grid, optima from a smoothed Lagrangian
//! dual paired with exactly feasible rounded primal points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework1::{ConstraintMap, FeasibilityInstance};
use crate::linalg::{EigDecomposition, TensoredHermitian};
use crate::qip2::Qip2Instance;
use crate::qmam::QmamInstance;
use crate::qrg2::{bloch_ball_grid, bloch_state};
use crate::states::{matched_purification, DensityOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    FrankWolfe,
    BlochGrid,
    DualBracket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub method: OracleMethod,
    /// Best value found; for minimizations an upper bound on the optimum.
    pub value: f64,
    /// Certified lower bound (for the bracket method, on the maximum).
    pub lower_bound: f64,
    /// `value - lower_bound`, never negative.
    pub certified_gap: f64,
    pub iterations: Option<usize>,
    pub resolution: Option<f64>,
}

/// A min-max game `min_{x_1..x_k} max_{0 <= Pi <= I} <S(x), Pi>` where each
/// `x_j` is a density operator and `S` is affine and block diagonal.
pub trait BlockGame {
    /// Subsystem dims of every register.
    fn registers(&self) -> Vec<Vec<usize>>;
    /// Diagonal blocks of `S(x)`.
    fn s_blocks(&self, x: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>>;
    /// Per-register matrices `G_j(Pi)` with `sum_j <x_j, G_j(Pi)> = <S(x), Pi>`.
    fn gradients(&self, pi: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>>;
}

/// The feasibility game of a [`FeasibilityInstance`], assembled from its raw fields.
pub struct FeasibilityGame<'a> {
    inst: &'a FeasibilityInstance,
}

impl<'a> FeasibilityGame<'a> {
    pub fn new(inst: &'a FeasibilityInstance) -> Result<Self> {
        inst.validate()?;
        Ok(Self { inst })
    }

    fn constraint_image(&self, x: &TensoredHermitian) -> Result<TensoredHermitian> {
        match &self.inst.constraint {
            ConstraintMap::PartialTrace { subsystem } => x.partial_trace(*subsystem),
            ConstraintMap::ConjugatedPartialTrace { unitary, subsystem } => {
                let rotated = TensoredHermitian::new(
                    x.dims().to_vec(),
                    unitary * x.matrix() * unitary.adjoint(),
                )?;
                rotated.partial_trace(*subsystem)
            }
        }
    }
}

impl BlockGame for FeasibilityGame<'_> {
    fn registers(&self) -> Vec<Vec<usize>> {
        vec![self.inst.primal_dims.clone()]
    }

    fn s_blocks(&self, x: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>> {
        let scalar = self.inst.guess - self.inst.objective.inner(&x[0])?;
        let image = self.constraint_image(&x[0])?;
        Ok(vec![
            TensoredHermitian::from_real_diagonal(&[scalar]),
            image.sub(&self.inst.bound)?,
        ])
    }

    fn gradients(&self, pi: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>> {
        let p = pi[0].matrix()[(0, 0)].re;
        let block = &pi[1];
        let dims = &self.inst.primal_dims;
        let (k, unitary) = match &self.inst.constraint {
            ConstraintMap::PartialTrace { subsystem } => (*subsystem, None),
            ConstraintMap::ConjugatedPartialTrace { unitary, subsystem } => {
                (*subsystem, Some(unitary))
            }
        };
        let mut lifted = block.embed_identity(k, dims[k])?.with_dims(dims.clone())?;
        if let Some(u) = unitary {
            lifted = TensoredHermitian::new(dims.clone(), u.adjoint() * lifted.matrix() * u)?;
        }
        let constant = p * self.inst.guess - self.inst.bound.inner(block)?;
        let g = lifted.sub(&self.inst.objective.scale(p))?.shift(constant);
        Ok(vec![g])
    }
}

/// The two-register game of a [`QmamInstance`] at guess `c`.
pub struct QmamGame<'a> {
    inst: &'a QmamInstance,
    guess: f64,
}

impl<'a> QmamGame<'a> {
    pub fn new(inst: &'a QmamInstance, guess: f64) -> Self {
        Self { inst, guess }
    }
}

impl BlockGame for QmamGame<'_> {
    fn registers(&self) -> Vec<Vec<usize>> {
        vec![
            vec![2, self.inst.x_dim, self.inst.y_dim],
            vec![self.inst.x_dim],
        ]
    }

    fn s_blocks(&self, x: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>> {
        let scalar = self.guess - self.inst.measurement.inner(&x[0])?;
        let marginal = x[0].partial_trace(2)?;
        let half = TensoredHermitian::identity(vec![2])
            .tensor(&x[1])
            .scale(0.5);
        Ok(vec![
            TensoredHermitian::from_real_diagonal(&[scalar]),
            marginal.sub(&half)?,
        ])
    }

    fn gradients(&self, pi: &[TensoredHermitian]) -> Result<Vec<TensoredHermitian>> {
        let p = pi[0].matrix()[(0, 0)].re;
        let block = pi[1].clone().with_dims(vec![2, self.inst.x_dim])?;
        let g1 = block
            .tensor(&TensoredHermitian::identity(vec![self.inst.y_dim]))
            .sub(&self.inst.measurement.scale(p))?
            .shift(p * self.guess);
        let g2 = block.partial_trace(0)?.scale(-0.5);
        Ok(vec![g1, g2])
    }
}

fn positive_part_sum(blocks: &[EigDecomposition]) -> f64 {
    blocks
        .iter()
        .flat_map(|e| e.values.iter())
        .filter(|&&l| l > 0.0)
        .sum()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Minimizes `g(x) = sum of positive eigenvalues of S(x)` by Frank–Wolfe on the
/// softplus smoothing `mu sum ln(1 + exp(lambda / mu))`, whose gradient
/// `sigmoid(S / mu)` is itself a dual strategy. `mu` shrinks like
/// `1/sqrt(t)` and steps are `2 / (t + 2)`.
///
/// The report's value is the best `g` seen; its lower bound is the best dual
/// value `sum_j lambda_min(G_j(Pi))` over the smoothed strategies and their
/// running average.
pub fn frank_wolfe_game<G: BlockGame>(game: &G, iterations: usize) -> Result<OracleReport> {
    if iterations == 0 {
        return Err(Error::param("iterations must be at least 1"));
    }
    let registers = game.registers();
    let mut x: Vec<TensoredHermitian> = registers
        .iter()
        .map(|d| {
            let side: usize = d.iter().product();
            TensoredHermitian::identity(d.clone()).scale(1.0 / side as f64)
        })
        .collect();
    let mut best_primal = f64::INFINITY;
    let mut best_dual = f64::NEG_INFINITY;
    let mut pi_avg: Option<Vec<TensoredHermitian>> = None;
    let mut weight_total = 0.0;
    let mu0 = 0.5;
    let audit_every = (iterations / 200).max(1);

    for t in 0..iterations {
        let blocks: Vec<EigDecomposition> = game.s_blocks(&x)?.iter().map(|b| b.eig()).collect();
        best_primal = best_primal.min(positive_part_sum(&blocks));
        let mu = mu0 / ((t + 1) as f64).sqrt();
        let pi: Vec<TensoredHermitian> =
            blocks.iter().map(|e| e.map(|l| logistic(l / mu))).collect();
        let grads = game.gradients(&pi)?;
        let grad_eigs: Vec<EigDecomposition> = grads.iter().map(|g| g.eig()).collect();
        best_dual = best_dual.max(grad_eigs.iter().map(|e| e.min()).sum());

        let w = (t + 1) as f64;
        weight_total += w;
        match pi_avg.as_mut() {
            None => pi_avg = Some(pi.iter().map(|p| p.scale(w)).collect()),
            Some(avg) => {
                for (a, p) in avg.iter_mut().zip(&pi) {
                    *a = a.add(&p.scale(w))?;
                }
            }
        }
        if t % audit_every == 0 || t + 1 == iterations {
            let avg: Vec<TensoredHermitian> = pi_avg
                .as_ref()
                .map(|v| v.iter().map(|a| a.scale(1.0 / weight_total)).collect())
                .unwrap_or_default();
            let dual: f64 = game.gradients(&avg)?.iter().map(|g| g.eig().min()).sum();
            best_dual = best_dual.max(dual);
        }

        let gamma = 2.0 / (t as f64 + 2.0);
        for ((xj, e), dims) in x.iter_mut().zip(&grad_eigs).zip(&registers) {
            let vertex = TensoredHermitian::outer(dims.clone(), &e.bottom_vector())?;
            *xj = xj.scale(1.0 - gamma).add(&vertex.scale(gamma))?;
        }
    }
    let final_blocks: Vec<EigDecomposition> = game.s_blocks(&x)?.iter().map(|b| b.eig()).collect();
    best_primal = best_primal.min(positive_part_sum(&final_blocks));
    Ok(OracleReport {
        method: OracleMethod::FrankWolfe,
        value: best_primal,
        lower_bound: best_dual,
        certified_gap: (best_primal - best_dual).max(0.0),
        iterations: Some(iterations),
        resolution: None,
    })
}

pub fn frank_wolfe_reference(
    inst: &FeasibilityInstance,
    iterations: usize,
) -> Result<OracleReport> {
    frank_wolfe_game(&FeasibilityGame::new(inst)?, iterations)
}

pub fn frank_wolfe_qmam_reference(
    inst: &QmamInstance,
    guess: f64,
    iterations: usize,
) -> Result<OracleReport> {
    frank_wolfe_game(&QmamGame::new(inst, guess), iterations)
}

/// Exhaustive minimization of the positive trace of `S` over a Bloch-ball grid
/// (primal side 2 only). The certified gap is the width-type Lipschitz bound
/// times the worst trace distance to the nearest grid point.
pub fn bloch_grid_reference(inst: &FeasibilityInstance, resolution: f64) -> Result<OracleReport> {
    if inst.primal_side() != 2 {
        return Err(Error::dims(format!(
            "grid reference needs primal side 2, got {}",
            inst.primal_side()
        )));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::param(format!(
            "resolution {resolution} outside (0, 1]"
        )));
    }
    let game = FeasibilityGame::new(inst)?;
    let mut best = f64::INFINITY;
    for [x, y, z] in bloch_ball_grid(resolution) {
        let rho = bloch_state(x, y, z, inst.primal_dims.clone())?.into_op();
        let blocks: Vec<EigDecomposition> =
            game.s_blocks(&[rho])?.iter().map(|b| b.eig()).collect();
        best = best.min(positive_part_sum(&blocks));
    }
    let lipschitz = lipschitz_bound(inst);
    let steps = (1.0 / resolution).ceil();
    // Half the cell diagonal in Bloch coordinates, halved again for trace distance.
    let gap = lipschitz * (3.0_f64.sqrt() / (2.0 * steps));
    Ok(OracleReport {
        method: OracleMethod::BlochGrid,
        value: best,
        lower_bound: best - gap,
        certified_gap: gap,
        iterations: None,
        resolution: Some(resolution),
    })
}

/// Bound on the spectral norm of the gradient over all dual strategies.
fn lipschitz_bound(inst: &FeasibilityInstance) -> f64 {
    let b = inst.bound.eigenvalues();
    let pos: f64 = b.iter().filter(|&&l| l > 0.0).sum();
    let neg: f64 = -b.iter().filter(|&&l| l < 0.0).sum::<f64>();
    inst.objective.spectral_norm() + inst.guess.abs() + (1.0 + neg).max(pos)
}

/// Certified bracket `[lower, upper]` on an optimal acceptance probability,
/// with an exactly feasible state attaining `lower`.
#[derive(Clone, Debug)]
pub struct OptimumBracket {
    pub lower: f64,
    pub upper: f64,
    pub witness: DensityOperator,
    pub iterations: usize,
}

impl OptimumBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn report(&self) -> OracleReport {
        OracleReport {
            method: OracleMethod::DualBracket,
            value: self.upper,
            lower_bound: self.lower,
            certified_gap: self.width().max(0.0),
            iterations: Some(self.iterations),
            resolution: None,
        }
    }
}

/// Smoothing levels of the dual continuation.
const SMOOTHING_LEVELS: [f64; 6] = [5e-2, 1e-2, 2e-3, 5e-4, 1e-4, 2e-5];

/// `mu ln tr exp(A / mu)` with the softmax state `exp(A / mu) / tr`.
fn soft_max(a: &TensoredHermitian, mu: f64) -> Result<(f64, TensoredHermitian)> {
    let eig = a.eig();
    let top = eig.max();
    let total: f64 = eig.values.iter().map(|&l| ((l - top) / mu).exp()).sum();
    let state = eig.map(|l| ((l - top) / mu).exp() / total);
    Ok((top + mu * total.ln(), state))
}

/// Accelerated gradient descent with restarts and backtracking on a smooth
/// convex function of one Hermitian variable. `eval` returns value and gradient.
fn minimize_smooth<F>(
    start: TensoredHermitian,
    iterations: usize,
    mut eval: F,
) -> Result<TensoredHermitian>
where
    F: FnMut(&TensoredHermitian) -> Result<(f64, TensoredHermitian)>,
{
    let mut x = start;
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut step = 1.0_f64;
    let (mut fx, _) = eval(&x)?;
    for _ in 0..iterations {
        let (fy, gy) = eval(&y)?;
        let g2 = gy.inner(&gy)?;
        if g2 < 1e-30 {
            break;
        }
        let mut candidate;
        let mut fc;
        loop {
            candidate = y.sub(&gy.scale(step))?;
            fc = eval(&candidate)?.0;
            if fc <= fy - 0.5 * step * g2 + 1e-15 || step < 1e-14 {
                break;
            }
            step *= 0.5;
        }
        if fc > fx {
            // restart momentum
            theta = 1.0;
            y = x.clone();
            step *= 1.5;
            continue;
        }
        let next_theta = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / next_theta;
        y = candidate.add(&candidate.sub(&x)?.scale(beta))?;
        x = candidate;
        fx = fc;
        theta = next_theta;
        step *= 1.2;
    }
    Ok(x)
}

/// Bracket for `max <R, rho>` subject to `tr_M rho = tr_M rho_1`.
///
/// The upper end minimizes the dual `<B, Y> + lambda_max(R - I ⊗ Y)` through a
/// log-sum-exp smoothing; the lower end rounds the smoothed primal state
/// `softmax((R - I ⊗ Y) / mu)` to the constraint exactly.
pub fn qip2_optimum_reference(q: &Qip2Instance, iterations: usize) -> Result<OptimumBracket> {
    let b = q.initial.density().partial_trace(0)?;
    let r = &q.measurement;
    let v_dims = vec![q.verifier_dim];
    let lift = |y: &TensoredHermitian| -> Result<TensoredHermitian> {
        r.sub(&TensoredHermitian::identity(vec![q.message_dim]).tensor(y))
    };
    let mut y = TensoredHermitian::zeros(v_dims.clone());
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut witness = None;
    let per_level = (iterations / SMOOTHING_LEVELS.len()).max(1);
    for &mu in &SMOOTHING_LEVELS {
        y = minimize_smooth(y, per_level, |y| {
            let (value, state) = soft_max(&lift(y)?, mu)?;
            let grad = b.op().sub(&state.partial_trace(0)?)?;
            Ok((b.op().inner(y)? + value, grad))
        })?;
        upper = upper.min(b.op().inner(&y)? + lift(&y)?.eig().max());
        let (_, state) = soft_max(&lift(&y)?, mu)?;
        let sigma1 = DensityOperator::project(state)?;
        let rounded = matched_purification(&sigma1.partial_trace(0)?, &b, &sigma1, 0)?;
        let objective = rounded.expectation(r)?;
        if objective > lower {
            lower = objective;
            witness = Some(rounded);
        }
    }
    let witness =
        witness.ok_or_else(|| Error::NonFinite("optimum reference produced no witness".into()))?;
    Ok(OptimumBracket {
        lower,
        upper,
        witness,
        iterations,
    })
}

/// Bracket for `max <R, rho>` subject to `tr_Y rho = I_A / 2 ⊗ sigma`.
///
/// Dual: `min_Y lambda_max(R - Y ⊗ I_Y) + lambda_max(tr_A(Y) / 2)`.
pub fn qmam_optimum_reference(inst: &QmamInstance, iterations: usize) -> Result<OptimumBracket> {
    let r = &inst.measurement;
    let constraint_dims = vec![2, inst.x_dim];
    let id_y = TensoredHermitian::identity(vec![inst.y_dim]);
    let first = |y: &TensoredHermitian| -> Result<TensoredHermitian> { r.sub(&y.tensor(&id_y)) };
    let second =
        |y: &TensoredHermitian| -> Result<TensoredHermitian> { Ok(y.partial_trace(0)?.scale(0.5)) };
    let mut y = TensoredHermitian::zeros(constraint_dims.clone());
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut witness = None;
    let per_level = (iterations / SMOOTHING_LEVELS.len()).max(1);
    for &mu in &SMOOTHING_LEVELS {
        y = minimize_smooth(y, per_level, |y| {
            let (v1, rho) = soft_max(&first(y)?, mu)?;
            let (v2, sigma) = soft_max(&second(y)?, mu)?;
            let grad = TensoredHermitian::identity(vec![2])
                .tensor(&sigma)
                .scale(0.5)
                .sub(&rho.partial_trace(2)?)?;
            Ok((v1 + v2, grad))
        })?;
        upper = upper.min(first(&y)?.eig().max() + second(&y)?.eig().max());
        let (_, rho) = soft_max(&first(&y)?, mu)?;
        let (_, sigma) = soft_max(&second(&y)?, mu)?;
        let rho = DensityOperator::project(rho)?;
        let target = DensityOperator::project(
            TensoredHermitian::identity(vec![2])
                .tensor(&sigma)
                .scale(0.5),
        )?;
        let rounded = matched_purification(&rho.partial_trace(2)?, &target, &rho, 2)?;
        let objective = rounded.expectation(r)?;
        if objective > lower {
            lower = objective;
            witness = Some(rounded);
        }
    }
    let witness =
        witness.ok_or_else(|| Error::NonFinite("optimum reference produced no witness".into()))?;
    Ok(OptimumBracket {
        lower,
        upper,
        witness,
        iterations,
    })
}
