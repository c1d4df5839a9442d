//! Two-message interactive proof instances: feasibility decisions with exact
//! witnesses, promise decisions and the optimal acceptance probability.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework1::{
    solve_equilibrium_with, ConstraintMap, EquilibriumOutcome, FeasibilityInstance, Schedule,
    SolverOptions, StopRule,
};
use crate::linalg::TensoredHermitian;
use crate::states::{matched_purification, DensityOperator, PureState};

/// Largest precision for which the rounding guarantee `c - sqrt(2 delta - delta^2)` is used.
pub const MAX_ROUNDING_PRECISION: f64 = 0.2;
const SPECTRUM_TOLERANCE: f64 = 1e-10;

/// Completeness and soundness thresholds `(c, s)` with `c > s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Promise {
    pub completeness: f64,
    pub soundness: f64,
}

impl Promise {
    pub fn new(completeness: f64, soundness: f64) -> Result<Self> {
        let p = Self {
            completeness,
            soundness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn gap(&self) -> f64 {
        self.completeness - self.soundness
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.completeness + self.soundness)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.soundness)
            && (0.0..=1.0).contains(&self.completeness)
            && self.completeness > self.soundness;
        if !ok {
            return Err(Error::param(format!(
                "promise ({}, {}) needs 0 <= s < c <= 1",
                self.completeness, self.soundness
            )));
        }
        Ok(())
    }
}

/// Verifier data: initial pure state on `M ⊗ V` (message first) and the
/// accepting measurement `0 <= R <= I` on the same space.
#[derive(Clone, Debug, PartialEq)]
pub struct Qip2Instance {
    pub message_dim: usize,
    pub verifier_dim: usize,
    pub initial: PureState,
    pub measurement: TensoredHermitian,
    pub promise: Option<Promise>,
}

impl Qip2Instance {
    pub fn new(
        message_dim: usize,
        verifier_dim: usize,
        initial: PureState,
        measurement: TensoredHermitian,
        promise: Option<Promise>,
    ) -> Result<Self> {
        let dims = vec![message_dim, verifier_dim];
        if initial.dims() != dims.as_slice() {
            return Err(Error::dims(format!(
                "initial state dims {:?}, expected {dims:?}",
                initial.dims()
            )));
        }
        let measurement = measurement.with_dims(dims)?;
        check_measurement(&measurement)?;
        if let Some(p) = &promise {
            p.validate()?;
        }
        Ok(Self {
            message_dim,
            verifier_dim,
            initial,
            measurement,
            promise,
        })
    }

    /// Like [`Qip2Instance::new`] but accepts a density operator for the
    /// initial state, replacing it by its top eigenvector when it is not pure.
    pub fn from_density(
        message_dim: usize,
        verifier_dim: usize,
        initial: &DensityOperator,
        measurement: TensoredHermitian,
        promise: Option<Promise>,
    ) -> Result<Self> {
        let pure = match PureState::from_density(initial) {
            Ok(p) => p,
            Err(Error::NotPure(defect)) => {
                warn!("initial state is not pure (second eigenvalue {defect:.3e}); using its top eigenvector");
                PureState::top_eigenvector(initial)
            }
            Err(e) => return Err(e),
        };
        Self::new(message_dim, verifier_dim, pure, measurement, promise)
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.message_dim, self.verifier_dim]
    }

    /// `tr_M rho_1`, the required verifier marginal.
    pub fn verifier_marginal(&self) -> Result<DensityOperator> {
        self.initial.density().partial_trace(0)
    }

    /// `<R, rho>`
    pub fn acceptance(&self, rho: &DensityOperator) -> Result<f64> {
        rho.expectation(&self.measurement)
    }

    /// `||tr_M rho - tr_M rho_1||_1`
    pub fn marginal_residue(&self, rho: &DensityOperator) -> Result<f64> {
        let target = self.verifier_marginal()?;
        Ok(rho.partial_trace(0)?.op().sub(target.op())?.trace_norm())
    }
}

pub(crate) fn check_measurement(r: &TensoredHermitian) -> Result<()> {
    let values = r.eigenvalues();
    let (max, min) = (values[0], values[values.len() - 1]);
    if min < -SPECTRUM_TOLERANCE || max > 1.0 + SPECTRUM_TOLERANCE {
        return Err(Error::param(format!(
            "measurement spectrum [{min:.3e}, {max:.3e}] outside [0, 1]"
        )));
    }
    Ok(())
}

/// Feasibility instance with `Psi = tr_M`, `A = R`, `B = tr_M rho_1`.
pub fn to_instance(q: &Qip2Instance, c: f64) -> Result<FeasibilityInstance> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::param(format!("guess {c} outside [0, 1]")));
    }
    FeasibilityInstance::new(
        q.dims(),
        q.measurement.clone(),
        ConstraintMap::PartialTrace { subsystem: 0 },
        q.verifier_marginal()?.into_op(),
        c,
        true,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Infeasible,
    FeasibleWithWitness,
}

#[derive(Clone, Debug)]
pub struct FeasibilityVerdict {
    pub kind: VerdictKind,
    pub witness: Option<DensityOperator>,
    /// `c - sqrt(2 delta - delta^2)`, present with a witness.
    pub guarantee: Option<f64>,
    /// Precision actually used (after clamping to the rounding window).
    pub delta: f64,
    pub equilibrium: EquilibriumOutcome,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.kind == VerdictKind::FeasibleWithWitness
    }
}

/// Loss of objective incurred by rounding a `delta`-approximate point.
pub fn rounding_loss(delta: f64) -> f64 {
    (2.0 * delta - delta * delta).max(0.0).sqrt()
}

fn clamp_precision(delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::param(format!("precision {delta} must be positive")));
    }
    if delta > MAX_ROUNDING_PRECISION {
        warn!("precision {delta} clamped to {MAX_ROUNDING_PRECISION}");
        return Ok(MAX_ROUNDING_PRECISION);
    }
    Ok(delta)
}

pub fn decide_feasibility(q: &Qip2Instance, c: f64, delta: f64) -> Result<FeasibilityVerdict> {
    decide_feasibility_with(q, c, delta, &SolverOptions::default())
}

/// Approximate value `lambda_bar` at precision `delta`: above `delta` the
/// problem is infeasible, otherwise the averaged iterate is rounded to an
/// exactly feasible witness. The solver stops as soon as either branch is
/// certified; `options.stop` is overridden accordingly.
pub fn decide_feasibility_with(
    q: &Qip2Instance,
    c: f64,
    delta: f64,
    options: &SolverOptions,
) -> Result<FeasibilityVerdict> {
    let delta = clamp_precision(delta)?;
    let inst = to_instance(q, c)?;
    let mut opts = options.clone();
    if opts.stop != StopRule::FullSchedule {
        opts.stop = StopRule::Decision {
            accept_below: delta,
            reject_above: 0.0,
        };
    }
    let equilibrium = solve_equilibrium_with(&inst, delta, &opts)?;
    if equilibrium.value > delta {
        return Ok(FeasibilityVerdict {
            kind: VerdictKind::Infeasible,
            witness: None,
            guarantee: None,
            delta,
            equilibrium,
        });
    }
    let witness = round_to_exact(&equilibrium.rho_bar, q)?;
    Ok(FeasibilityVerdict {
        kind: VerdictKind::FeasibleWithWitness,
        witness: Some(witness),
        guarantee: Some(c - rounding_loss(delta)),
        delta,
        equilibrium,
    })
}

/// Exactly feasible state near `rho_bar`: an extension of `tr_M rho_1` whose
/// fidelity with `rho_bar` equals `F(tr_M rho_bar, tr_M rho_1)`.
pub fn round_to_exact(rho_bar: &DensityOperator, q: &Qip2Instance) -> Result<DensityOperator> {
    if rho_bar.dims() != q.dims().as_slice() {
        return Err(Error::dims(format!(
            "state dims {:?}, expected {:?}",
            rho_bar.dims(),
            q.dims()
        )));
    }
    let current = rho_bar.partial_trace(0)?;
    let target = q.verifier_marginal()?;
    matched_purification(&current, &target, rho_bar, 0)
}

/// Accepts iff the witness branch fires at guess `(c + s) / 2` and precision `gap^2 / 18`.
pub fn decide_promise(q: &Qip2Instance) -> Result<bool> {
    decide_promise_with(q, &SolverOptions::default()).map(|v| v.is_feasible())
}

pub fn decide_promise_with(
    q: &Qip2Instance,
    options: &SolverOptions,
) -> Result<FeasibilityVerdict> {
    let promise = q.promise.ok_or(Error::MissingPromise)?;
    let gap = promise.gap();
    decide_feasibility_with(q, promise.midpoint(), gap * gap / 18.0, options)
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub guess: f64,
    pub kind: VerdictKind,
    pub value: f64,
    pub lower_bound: f64,
    pub rounds_executed: usize,
    pub witness_objective: f64,
    pub schedule: Schedule,
}

#[derive(Clone, Debug)]
pub struct OptimumOutcome {
    pub alpha_estimate: f64,
    pub witness: DensityOperator,
    /// `<R, witness>`; a lower bound on the optimum since the witness is exactly feasible.
    pub witness_objective: f64,
    /// Final bracket of the search.
    pub lower: f64,
    pub upper: f64,
    pub probes: Vec<Probe>,
    /// Witness refinement solves run after the search.
    pub refinements: Vec<Probe>,
}

/// Number of bisection probes for precision `delta` on `[0, 1]`.
pub fn probe_count(delta: f64) -> usize {
    (1.0 / delta).log2().ceil().max(0.0) as usize
}

pub fn solve_optimum(q: &Qip2Instance, delta: f64) -> Result<(f64, DensityOperator)> {
    let out = solve_optimum_with(q, delta, &SolverOptions::default())?;
    Ok((out.alpha_estimate, out.witness))
}

/// Precision of the witness refinement relative to the requested precision.
pub const REFINEMENT_FACTOR: f64 = 8.0;

/// Bisection on the guess value over `[0, 1]` with `ceil(log2(1/delta))`
/// feasibility probes. Every probe's averaged iterate is rounded to an exactly
/// feasible state and the best of these is kept as the witness.
///
/// The bisection only locates the optimum; a witness from a probe at precision
/// `delta` may lose up to `sqrt(2 delta)` in rounding. After the search,
/// refinement solves at precision `delta / 8` try to produce a better witness,
/// walking down from the bracket midpoint through its lower end to
/// `lo - delta / 2` and stopping at the first feasible one. They do
/// not move the bracket and a refinement that hits the iteration cap is skipped.
pub fn solve_optimum_with(
    q: &Qip2Instance,
    delta: f64,
    options: &SolverOptions,
) -> Result<OptimumOutcome> {
    search_optimum(q, delta, options, true)
}

pub(crate) fn search_optimum(
    q: &Qip2Instance,
    delta: f64,
    options: &SolverOptions,
    refine: bool,
) -> Result<OptimumOutcome> {
    let delta = clamp_precision(delta)?;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut probes = Vec::new();
    let mut best: Option<(f64, DensityOperator)> = None;
    let mut keep = |objective: f64, candidate: DensityOperator| {
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, candidate));
        }
    };
    for _ in 0..probe_count(delta) {
        let mid = 0.5 * (lo + hi);
        let (probe, candidate) = run_probe(q, mid, delta, options)?;
        keep(probe.witness_objective, candidate);
        match probe.kind {
            VerdictKind::FeasibleWithWitness => lo = mid,
            VerdictKind::Infeasible => hi = mid,
        }
        probes.push(probe);
    }
    let mut refinements = Vec::new();
    let refinement_guesses = if refine {
        vec![
            0.5 * (lo + hi),
            lo,
            (lo - 0.25 * delta).max(0.0),
            (lo - 0.5 * delta).max(0.0),
        ]
    } else {
        Vec::new()
    };
    for guess in refinement_guesses {
        match run_probe(q, guess, delta / REFINEMENT_FACTOR, options) {
            Ok((probe, candidate)) => {
                let found = probe.kind == VerdictKind::FeasibleWithWitness;
                keep(probe.witness_objective, candidate);
                refinements.push(probe);
                if found {
                    break;
                }
            }
            Err(Error::PrecisionNotReached { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let (witness_objective, witness) = match best {
        Some(b) => b,
        None => {
            let rho = DensityOperator::maximally_mixed(q.dims());
            let w = round_to_exact(&rho, q)?;
            (q.acceptance(&w)?, w)
        }
    };
    let lower = lo.max(witness_objective).min(hi);
    let alpha_estimate = 0.5 * (lower + hi);
    Ok(OptimumOutcome {
        alpha_estimate,
        witness,
        witness_objective,
        lower,
        upper: hi,
        probes,
        refinements,
    })
}

/// One feasibility solve; the averaged iterate is rounded whatever the verdict.
fn run_probe(
    q: &Qip2Instance,
    guess: f64,
    delta: f64,
    options: &SolverOptions,
) -> Result<(Probe, DensityOperator)> {
    let verdict = decide_feasibility_with(q, guess, delta, options)?;
    let candidate = match verdict.witness {
        Some(w) => w,
        None => round_to_exact(&verdict.equilibrium.rho_bar, q)?,
    };
    let objective = q.acceptance(&candidate)?;
    let probe = Probe {
        guess,
        kind: verdict.kind,
        value: verdict.equilibrium.value,
        lower_bound: verdict.equilibrium.lower_bound,
        rounds_executed: verdict.equilibrium.rounds_executed,
        witness_objective: objective,
        schedule: verdict.equilibrium.schedule,
    };
    Ok((probe, candidate))
}
