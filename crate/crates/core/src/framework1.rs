//! Equilibrium solver for the block game
//! `min_rho max_{0 <= Pi <= I} <S(rho), Pi>` with
//! `S(rho) = diag(c - <A, rho>, Psi(rho) - B)`, whose value is non-positive
//! exactly when `<A, rho> >= c, Psi(rho) = B` has a solution.

use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dims, CMatrix, TensoredHermitian, C64};
use crate::mmw::{MmwEngine, MmwTrace};
use crate::states::DensityOperator;

/// Default ceiling on executed rounds.
pub const DEFAULT_ITERATION_CAP: usize = 1_000_000;
const DEFAULT_CHECK_INTERVAL: usize = 16;
const MEASUREMENT_TOLERANCE: f64 = 1e-10;
const UNITARY_TOLERANCE: f64 = 1e-8;

/// The linear constraint map `Psi`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintMap {
    /// `rho -> tr_k rho`
    PartialTrace { subsystem: usize },
    /// `rho -> tr_k (U rho U*)`
    ConjugatedPartialTrace { unitary: CMatrix, subsystem: usize },
}

impl ConstraintMap {
    pub fn subsystem(&self) -> usize {
        match self {
            ConstraintMap::PartialTrace { subsystem }
            | ConstraintMap::ConjugatedPartialTrace { subsystem, .. } => *subsystem,
        }
    }

    pub fn apply(&self, rho: &TensoredHermitian) -> Result<TensoredHermitian> {
        match self {
            ConstraintMap::PartialTrace { subsystem } => rho.partial_trace(*subsystem),
            ConstraintMap::ConjugatedPartialTrace { unitary, subsystem } => {
                rho.conjugate(unitary)?.partial_trace(*subsystem)
            }
        }
    }

    /// Adjoint map; `primal_dims` supplies the side of the traced factor.
    pub fn adjoint(
        &self,
        p: &TensoredHermitian,
        primal_dims: &[usize],
    ) -> Result<TensoredHermitian> {
        let k = self.subsystem();
        let lifted = p
            .embed_identity(k, primal_dims[k])?
            .with_dims(primal_dims.to_vec())?;
        match self {
            ConstraintMap::PartialTrace { .. } => Ok(lifted),
            ConstraintMap::ConjugatedPartialTrace { unitary, .. } => {
                lifted.conjugate(&unitary.adjoint())
            }
        }
    }
}

/// `(Psi, A, B)` together with the guess value `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityInstance {
    pub primal_dims: Vec<usize>,
    pub objective: TensoredHermitian,
    pub constraint: ConstraintMap,
    pub bound: TensoredHermitian,
    pub guess: f64,
    /// When set, the objective must satisfy `0 <= A <= I`.
    pub measurement_objective: bool,
}

impl FeasibilityInstance {
    pub fn new(
        primal_dims: Vec<usize>,
        objective: TensoredHermitian,
        constraint: ConstraintMap,
        bound: TensoredHermitian,
        guess: f64,
        measurement_objective: bool,
    ) -> Result<Self> {
        let inst = Self {
            primal_dims,
            objective,
            constraint,
            bound,
            guess,
            measurement_objective,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn primal_side(&self) -> usize {
        self.primal_dims.iter().product()
    }

    /// Dims of the constraint's output space.
    pub fn output_dims(&self) -> Vec<usize> {
        let mut dims = self.primal_dims.clone();
        dims.remove(self.constraint.subsystem());
        if dims.is_empty() {
            dims.push(1);
        }
        dims
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(&self.primal_dims)?;
        let side = self.primal_side();
        if self.objective.side() != side {
            return Err(Error::dims(format!(
                "objective side {} for primal side {side}",
                self.objective.side()
            )));
        }
        let k = self.constraint.subsystem();
        if k >= self.primal_dims.len() {
            return Err(Error::SubsystemOutOfRange {
                index: k,
                count: self.primal_dims.len(),
            });
        }
        let out: usize = self.output_dims().iter().product();
        if self.bound.side() != out {
            return Err(Error::dims(format!(
                "bound side {} but constraint output side {out}",
                self.bound.side()
            )));
        }
        if let ConstraintMap::ConjugatedPartialTrace { unitary, .. } = &self.constraint {
            if unitary.nrows() != side || unitary.ncols() != side {
                return Err(Error::dims(format!(
                    "unitary is {}x{}",
                    unitary.nrows(),
                    unitary.ncols()
                )));
            }
            let defect = (unitary.adjoint() * unitary - CMatrix::identity(side, side)).norm();
            if defect > UNITARY_TOLERANCE {
                return Err(Error::param(format!(
                    "constraint unitary is not unitary (defect {defect:.3e})"
                )));
            }
        }
        if !self.guess.is_finite() {
            return Err(Error::NonFinite("guess value".into()));
        }
        if self.measurement_objective {
            let values = self.objective.eigenvalues();
            let (max, min) = (values[0], values[values.len() - 1]);
            if min < -MEASUREMENT_TOLERANCE || max > 1.0 + MEASUREMENT_TOLERANCE {
                return Err(Error::param(format!(
                    "measurement spectrum [{min:.3e}, {max:.3e}] outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn with_guess(&self, guess: f64) -> Self {
        Self {
            guess,
            ..self.clone()
        }
    }
}

/// Block-diagonal operator `diag(scalar, block)` as used for `S` and `Pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator {
    pub scalar: f64,
    pub block: TensoredHermitian,
}

impl BlockOperator {
    /// Dense form on a single subsystem of side `1 + block.side()`.
    pub fn to_full(&self) -> TensoredHermitian {
        let n = self.block.side();
        let mut mat = CMatrix::zeros(n + 1, n + 1);
        mat[(0, 0)] = C64::new(self.scalar, 0.0);
        mat.view_mut((1, 1), (n, n)).copy_from(self.block.matrix());
        TensoredHermitian::from_raw(vec![n + 1], mat)
    }

    /// Best response: indicator of a positive scalar and the positive-eigenspace
    /// projector of the block (zero eigenvalues are excluded). Also returns the
    /// sum of positive eigenvalues.
    pub fn positive_response(&self) -> (DualCertificate, f64) {
        let (projector, block_value) = self.block.positive_projection();
        let p = if self.scalar > 0.0 { 1.0 } else { 0.0 };
        (
            DualCertificate { p, projector },
            self.scalar.max(0.0) + block_value,
        )
    }

    pub fn pair(&self, pi: &DualCertificate) -> Result<f64> {
        Ok(self.scalar * pi.p + self.block.inner(&pi.projector)?)
    }
}

/// Element `diag(p, P)` of the dual strategy set, `0 <= p <= 1`, `0 <= P <= I`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualCertificate {
    pub p: f64,
    pub projector: TensoredHermitian,
}

impl DualCertificate {
    pub fn to_full(&self) -> TensoredHermitian {
        BlockOperator {
            scalar: self.p,
            block: self.projector.clone(),
        }
        .to_full()
    }
}

pub fn build_s_blocks(rho: &DensityOperator, inst: &FeasibilityInstance) -> Result<BlockOperator> {
    if rho.side() != inst.primal_side() {
        return Err(Error::dims(format!(
            "state side {} for primal side {}",
            rho.side(),
            inst.primal_side()
        )));
    }
    let scalar = inst.guess - inst.objective.inner(rho.op())?;
    let image = inst.constraint.apply(rho.op())?;
    let block = image
        .sub(&inst.bound)?
        .with_dims(inst.bound.dims().to_vec())?;
    Ok(BlockOperator { scalar, block })
}

/// `S(rho) = diag(c - <A, rho>, Psi(rho) - B)`.
pub fn build_s(rho: &DensityOperator, inst: &FeasibilityInstance) -> Result<TensoredHermitian> {
    Ok(build_s_blocks(rho, inst)?.to_full())
}

/// `N(Pi) = -p A + Psi*(P) + (p c - <B, P>) I`, so that `<S(rho), Pi> = <rho, N(Pi)>`.
pub fn build_n(pi: &DualCertificate, inst: &FeasibilityInstance) -> Result<TensoredHermitian> {
    if pi.projector.side() != inst.bound.side() {
        return Err(Error::dims(format!(
            "dual block side {} for constraint output side {}",
            pi.projector.side(),
            inst.bound.side()
        )));
    }
    let lifted = inst.constraint.adjoint(&pi.projector, &inst.primal_dims)?;
    let shift = pi.p * inst.guess - inst.bound.inner(&pi.projector)?;
    let mut n = lifted.shift(shift);
    n.add_assign_scaled(&inst.objective, -pi.p);
    Ok(n)
}

const WIDTH_SNAP: f64 = 1e-12;

/// Uniform bound on `||N(Pi)||` over the dual strategy set:
/// `||A|| + |c| + max(1 + tr B_-, tr B_+)`, with the middle term raised to 1
/// for measurement objectives so that the usual instances get width 3.
pub fn width_bound(inst: &FeasibilityInstance) -> f64 {
    let (pos, neg) = inst
        .bound
        .eigenvalues()
        .iter()
        .fold(
            (0.0, 0.0),
            |(p, n), &l| {
                if l > 0.0 {
                    (p + l, n)
                } else {
                    (p, n - l)
                }
            },
        );
    // a density bound has pos = 1, neg = 0 up to rounding; keep r exact there
    let constraint_part = if neg <= WIDTH_SNAP && (pos - 1.0).abs() <= WIDTH_SNAP {
        1.0
    } else {
        (1.0 + neg).max(pos)
    };
    if inst.measurement_objective {
        // -pA + pcI has norm at most max(1, |c|) when 0 <= A <= I
        1.0 + inst.guess.abs().max(1.0) + constraint_part
    } else {
        inst.objective.spectral_norm() + inst.guess.abs() + constraint_part
    }
}

/// `max_{Pi} <S(rho), Pi>`, the sum of positive eigenvalues of `S(rho)`.
pub fn inner_max(rho: &DensityOperator, inst: &FeasibilityInstance) -> Result<f64> {
    Ok(build_s_blocks(rho, inst)?.positive_response().1)
}

/// Step size and round count of the update schedule:
/// `eps = delta / 4r`, `T = ceil(16 r^2 ln D / delta^2)` (at least one round).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub delta: f64,
    pub width: f64,
    pub dimension: usize,
    pub epsilon: f64,
    pub rounds: u64,
}

impl Schedule {
    pub fn new(delta: f64, width: f64, dimension: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::param(format!("precision {delta} must be positive")));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::param(format!("width {width} must be positive")));
        }
        if dimension == 0 {
            return Err(Error::dims("dimension 0"));
        }
        let epsilon = delta / (4.0 * width);
        if epsilon > 0.5 {
            return Err(Error::param(format!(
                "precision {delta} exceeds twice the width {width}"
            )));
        }
        let raw = (16.0 * width * width * (dimension as f64).ln() / (delta * delta)).ceil();
        let rounds = if raw < 1.0 { 1 } else { raw as u64 };
        Ok(Self {
            delta,
            width,
            dimension,
            epsilon,
            rounds,
        })
    }
}

/// When the round loop may end before the full schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Run all `T` rounds.
    FullSchedule,
    /// Stop once the certified interval `[lower, upper]` around the value is at most `delta` wide.
    CertifiedGap,
    /// Stop once `upper <= accept_below` or `lower > reject_above`.
    Decision {
        accept_below: f64,
        reject_above: f64,
    },
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub iteration_cap: usize,
    pub stop: StopRule,
    /// Rounds between certificate evaluations.
    pub check_interval: usize,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            iteration_cap: DEFAULT_ITERATION_CAP,
            stop: StopRule::CertifiedGap,
            check_interval: DEFAULT_CHECK_INTERVAL,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ScheduleComplete,
    Certified,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::ScheduleComplete => f.write_str("schedule complete"),
            StopReason::Certified => f.write_str("certified"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumOutcome {
    /// `<S(rho_bar), Pi_bar>`, an upper bound on the equilibrium value.
    pub value: f64,
    /// `lambda_min(N(average Pi))`, a lower bound on the equilibrium value.
    pub lower_bound: f64,
    pub rho_bar: DensityOperator,
    pub pi_bar: DualCertificate,
    pub schedule: Schedule,
    pub rounds_executed: usize,
    pub stop: StopReason,
    pub trace: Option<MmwTrace>,
}

impl EquilibriumOutcome {
    pub fn certified_gap(&self) -> f64 {
        self.value - self.lower_bound
    }
}

pub fn solve_equilibrium(inst: &FeasibilityInstance, delta: f64) -> Result<EquilibriumOutcome> {
    solve_equilibrium_with(inst, delta, &SolverOptions::default())
}

/// Runs the update loop with losses `M = (N(Pi_t) + rI) / 2r` where `Pi_t` is
/// the best response to the current iterate.
///
/// Every `check_interval` rounds the loop evaluates a certificate: the
/// primal bound is the smallest `inner_max` among the running average, the
/// average over the current epoch and the current iterate; the dual bound is
/// the larger of `lambda_min` of the average `N` over all rounds and over the
/// epoch, read off the cumulative loss. The loop stops as soon as
/// `options.stop` holds. After `T` rounds the regret bound alone guarantees
/// precision for the running average, which is always a candidate.
///
/// Under [`StopRule::FullSchedule`] all `T` rounds run and the returned point
/// is the running average.
pub fn solve_equilibrium_with(
    inst: &FeasibilityInstance,
    delta: f64,
    options: &SolverOptions,
) -> Result<EquilibriumOutcome> {
    inst.validate()?;
    let width = width_bound(inst);
    let schedule = Schedule::new(delta, width, inst.primal_side())?;
    let mut engine = MmwEngine::new(
        inst.primal_dims.clone(),
        schedule.epsilon,
        options.record_trace,
    )?;
    let budget = usize::try_from(schedule.rounds)
        .unwrap_or(usize::MAX)
        .min(options.iteration_cap.max(1));
    let interval = options.check_interval.max(1);
    let literal = options.stop == StopRule::FullSchedule;
    let mut stop = StopReason::ScheduleComplete;
    let mut certificate = None;

    for t in 1..=budget {
        let s = build_s_blocks(engine.density(), inst)?;
        let (pi, _) = s.positive_response();
        let n = build_n(&pi, inst)?;
        let loss = n.shift(width).scale(0.5 / width);
        engine.observe(loss)?;
        if !literal && (t % interval == 0 || t == budget) {
            let cert = Certificate::evaluate(&engine, inst, width)?;
            if stop_satisfied(options.stop, cert.upper, cert.lower, delta) {
                debug!(
                    "certified stop after {t} of {} rounds: [{:.6}, {:.6}]",
                    schedule.rounds, cert.lower, cert.upper
                );
                stop = StopReason::Certified;
                certificate = Some(cert);
                break;
            }
            certificate = Some(cert);
        }
    }

    let rounds = engine.rounds_run();
    let cert = match certificate {
        Some(c) if !literal && stop == StopReason::Certified => c,
        _ if literal => Certificate::running_average(&engine, inst, width)?,
        _ => Certificate::evaluate(&engine, inst, width)?,
    };
    if stop != StopReason::Certified
        && (rounds as u64) < schedule.rounds
        && cert.upper - cert.lower > delta
    {
        return Err(Error::PrecisionNotReached {
            rounds,
            gap: cert.upper - cert.lower,
            target: delta,
        });
    }
    let (pi_bar, _) = build_s_blocks(&cert.point, inst)?.positive_response();
    Ok(EquilibriumOutcome {
        value: cert.upper,
        lower_bound: cert.lower,
        rho_bar: cert.point,
        pi_bar,
        schedule,
        rounds_executed: rounds,
        stop,
        trace: options.record_trace.then(|| engine.into_trace()),
    })
}

/// Primal point with its `inner_max` and a dual lower bound.
struct Certificate {
    upper: f64,
    lower: f64,
    point: DensityOperator,
}

impl Certificate {
    fn running_average(engine: &MmwEngine, inst: &FeasibilityInstance, width: f64) -> Result<Self> {
        let point = engine.average_density()?;
        let upper = inner_max(&point, inst)?;
        let lower = average_loss_floor(
            engine.cumulative_spectrum().min(),
            engine.rounds_run(),
            width,
        );
        Ok(Self {
            upper,
            lower,
            point,
        })
    }

    fn evaluate(engine: &MmwEngine, inst: &FeasibilityInstance, width: f64) -> Result<Self> {
        let mut best = Self::running_average(engine, inst, width)?;
        let mut candidates = vec![engine.density().clone()];
        if let Some((point, loss)) = engine.epoch_averages() {
            best.lower = best
                .lower
                .max(average_loss_floor(loss.eig().min(), 1, width));
            candidates.push(point);
        }
        for point in candidates {
            let upper = inner_max(&point, inst)?;
            if upper < best.upper {
                best.upper = upper;
                best.point = point;
            }
        }
        Ok(best)
    }
}

/// `lambda_min` of the average `N` given `lambda_min` of the sum of `rounds`
/// losses `(N + rI) / 2r`.
pub(crate) fn average_loss_floor(loss_sum_min: f64, rounds: usize, width: f64) -> f64 {
    2.0 * width * loss_sum_min / rounds.max(1) as f64 - width
}

pub(crate) fn stop_satisfied(rule: StopRule, upper: f64, lower: f64, delta: f64) -> bool {
    match rule {
        StopRule::FullSchedule => false,
        StopRule::CertifiedGap => upper - lower <= delta,
        StopRule::Decision {
            accept_below,
            reject_above,
        } => upper <= accept_below || lower > reject_above,
    }
}
