//! Penalized equilibrium for product one-round refereed games. The No
//! player's state `sigma_N` is free; its constraint
//! `tr_N sigma_N = tr_N rho_N` is moved into the payoff with weight `2 / gap`
//! against a projector `Pi` controlled by the Yes side:
//!
//! `h1 = <R, sigma_Y ⊗ sigma_N> - b + (2/gap) <Pi, tr_N sigma_N - tr_N rho_N>`.

use log::debug;

use crate::error::{Error, Result};
use crate::framework1::{stop_satisfied, Schedule, SolverOptions, StopReason, StopRule};
use crate::linalg::TensoredHermitian;
use crate::mmw::MmwEngine;
use crate::qip2::{check_measurement, round_to_exact, search_optimum, Promise, Qip2Instance};
use crate::states::{DensityOperator, PureState};

/// Side of the per-player spaces accepted by [`game_value_oracle`].
pub const GRID_ORACLE_MAX_SIDE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Qrg2Instance {
    /// `[V_Y, Y, V_N, N]`
    pub dims: [usize; 4],
    /// Initial state on `V_Y ⊗ Y`.
    pub yes_state: PureState,
    /// Initial state on `V_N ⊗ N`.
    pub no_state: PureState,
    /// Referee measurement on `V_Y ⊗ Y ⊗ V_N ⊗ N`.
    pub measurement: TensoredHermitian,
    pub promise: Promise,
}

impl Qrg2Instance {
    pub fn new(
        dims: [usize; 4],
        yes_state: PureState,
        no_state: PureState,
        measurement: TensoredHermitian,
        promise: Promise,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::dims(format!("dims {dims:?} must be positive")));
        }
        if yes_state.dims() != [dims[0], dims[1]] {
            return Err(Error::dims(format!(
                "yes state dims {:?}",
                yes_state.dims()
            )));
        }
        if no_state.dims() != [dims[2], dims[3]] {
            return Err(Error::dims(format!("no state dims {:?}", no_state.dims())));
        }
        let measurement = measurement.with_dims(dims.to_vec())?;
        check_measurement(&measurement)?;
        promise.validate()?;
        Ok(Self {
            dims,
            yes_state,
            no_state,
            measurement,
            promise,
        })
    }

    pub fn yes_dims(&self) -> Vec<usize> {
        vec![self.dims[0], self.dims[1]]
    }

    pub fn no_dims(&self) -> Vec<usize> {
        vec![self.dims[2], self.dims[3]]
    }

    /// `(c + s) / 2`
    pub fn offset(&self) -> f64 {
        self.promise.midpoint()
    }

    pub fn gap(&self) -> f64 {
        self.promise.gap()
    }

    pub fn penalty(&self) -> f64 {
        2.0 / self.gap()
    }

    /// `2 + 4 / gap + b`, a bound on the spectral norm of every outer loss.
    pub fn width(&self) -> f64 {
        2.0 + 4.0 / self.gap() + self.offset()
    }

    /// `tr_N rho_N`
    pub fn no_marginal(&self) -> Result<DensityOperator> {
        self.no_state.density().partial_trace(1)
    }

    /// `tr_{V_N ⊗ N}((I ⊗ sqrt(sigma_N)) R (I ⊗ sqrt(sigma_N)))` on `V_Y ⊗ Y`.
    pub fn yes_measurement(&self, sigma_n: &DensityOperator) -> Result<TensoredHermitian> {
        let root = TensoredHermitian::identity(self.yes_dims()).tensor(&sigma_n.sqrt());
        let conj = root.matrix() * self.measurement.matrix() * root.matrix();
        let full = TensoredHermitian::new(self.dims.to_vec(), conj)?;
        full.partial_trace(3)?.partial_trace(2)
    }

    /// `tr_{V_Y ⊗ Y}((sqrt(sigma_Y) ⊗ I) R (sqrt(sigma_Y) ⊗ I))` on `V_N ⊗ N`.
    pub fn no_measurement(&self, sigma_y: &DensityOperator) -> Result<TensoredHermitian> {
        let root = sigma_y
            .sqrt()
            .tensor(&TensoredHermitian::identity(self.no_dims()));
        let conj = root.matrix() * self.measurement.matrix() * root.matrix();
        let full = TensoredHermitian::new(self.dims.to_vec(), conj)?;
        full.partial_trace(0)?.partial_trace(0)
    }

    /// Outer loss `N(sigma_Y, Pi)` with `<sigma_N, N> = h1(sigma_Y, Pi, sigma_N)`.
    pub fn loss(
        &self,
        sigma_y: &DensityOperator,
        pi: &TensoredHermitian,
    ) -> Result<TensoredHermitian> {
        let target = self.no_marginal()?;
        let alpha = self.penalty();
        let lifted = pi
            .tensor(&TensoredHermitian::identity(vec![self.dims[3]]))
            .scale(alpha);
        let shift = -(alpha * pi.inner(target.op())? + self.offset());
        self.no_measurement(sigma_y)?
            .add(&lifted)?
            .shift(shift)
            .with_dims(self.no_dims())
    }

    /// The Yes player's constraint problem for a fixed `sigma_N`, as an
    /// interactive-proof instance with message `Y` first and verifier `V_Y`.
    fn yes_problem(&self, sigma_n: &DensityOperator) -> Result<Qip2Instance> {
        let measurement = self.yes_measurement(sigma_n)?.permute(&[1, 0])?;
        let initial = self.yes_state.permute(&[1, 0])?;
        Qip2Instance::new(self.dims[1], self.dims[0], initial, measurement, None)
    }
}

pub fn eval_h1(
    sigma_y: &DensityOperator,
    pi: &TensoredHermitian,
    sigma_n: &DensityOperator,
    inst: &Qrg2Instance,
) -> Result<f64> {
    if sigma_y.dims() != inst.yes_dims().as_slice() || sigma_n.dims() != inst.no_dims().as_slice() {
        return Err(Error::dims(format!(
            "strategies of dims {:?} and {:?} for instance dims {:?}",
            sigma_y.dims(),
            sigma_n.dims(),
            inst.dims
        )));
    }
    if pi.side() != inst.dims[2] {
        return Err(Error::dims(format!(
            "projector side {} for V_N side {}",
            pi.side(),
            inst.dims[2]
        )));
    }
    let payoff = sigma_y.tensor(sigma_n).expectation(&inst.measurement)?;
    let diff = sigma_n
        .partial_trace(1)?
        .op()
        .sub(inst.no_marginal()?.op())?;
    Ok(payoff - inst.offset() + inst.penalty() * pi.inner(&diff)?)
}

/// How the Yes player's best response is computed each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Closed form when `V_Y` is trivial, nested bisection otherwise.
    #[default]
    Auto,
    /// Always the bisection solver on the Yes player's constraint problem.
    Nested,
}

#[derive(Clone, Debug)]
pub struct Qrg2Options {
    pub solver: SolverOptions,
    pub inner: InnerSolver,
    /// Options for nested solves; only the iteration cap and stop rule matter.
    pub inner_solver: SolverOptions,
}

impl Default for Qrg2Options {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            inner: InnerSolver::Auto,
            inner_solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Qrg2Outcome {
    /// Running average of `h1`, clamped into `[lower_bound, upper_bound]`.
    pub mu_bar: f64,
    pub decision: bool,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub schedule: Schedule,
    pub inner_delta: f64,
    pub rounds_executed: usize,
    pub stop: StopReason,
    pub sigma_n_bar: DensityOperator,
    pub inner_solves: usize,
}

/// Best response of the Yes side to `sigma_N`: a feasible `sigma_Y`, the
/// projector `Pi`, the value `h1` they attain and an upper bound on the
/// maximum of `h1` over all responses.
struct Response {
    sigma_y: DensityOperator,
    pi: TensoredHermitian,
    value: f64,
    upper: f64,
}

fn best_response(
    inst: &Qrg2Instance,
    sigma_n: &DensityOperator,
    inner_delta: f64,
    options: &Qrg2Options,
) -> Result<Response> {
    let diff = sigma_n
        .partial_trace(1)?
        .op()
        .sub(inst.no_marginal()?.op())?;
    let (pi, penalty_value) = diff.positive_projection();
    let penalty_term = inst.penalty() * penalty_value - inst.offset();
    let exact = options.inner == InnerSolver::Auto && inst.dims[0] == 1;
    let (sigma_y, payoff, payoff_upper) = if exact {
        let m = inst.yes_measurement(sigma_n)?;
        let eig = m.eig();
        let state = DensityOperator::from_pure(&PureState::new(inst.yes_dims(), eig.top_vector())?);
        let value = state.expectation(&m)?;
        (state, value, eig.max())
    } else {
        let problem = inst.yes_problem(sigma_n)?;
        let out = search_optimum(&problem, inner_delta, &options.inner_solver, false)?;
        let witness = round_to_exact(&out.witness, &problem)?.permute(&[1, 0])?;
        let value = out.witness_objective;
        (witness, value, out.upper)
    };
    Ok(Response {
        sigma_y,
        pi,
        value: payoff + penalty_term,
        upper: payoff_upper + penalty_term,
    })
}

pub fn solve_qrg2(inst: &Qrg2Instance, delta: f64) -> Result<(f64, bool)> {
    let out = solve_qrg2_with(inst, delta, &Qrg2Options::default())?;
    Ok((out.mu_bar, out.decision))
}

/// Update loop on `sigma_N` with width `2 + 4/gap + b` and inner precision `delta / 4`.
pub fn solve_qrg2_with(
    inst: &Qrg2Instance,
    delta: f64,
    options: &Qrg2Options,
) -> Result<Qrg2Outcome> {
    let limit = inst.gap() / 8.0;
    if !(delta > 0.0) || delta > limit * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "precision {delta} outside (0, gap/8 = {limit}]"
        )));
    }
    let width = inst.width();
    let inner_delta = delta / 4.0;
    let schedule = Schedule::new(delta, width, inst.no_dims().iter().product())?;
    let mut engine = MmwEngine::new(inst.no_dims(), schedule.epsilon, false)?;
    let budget = usize::try_from(schedule.rounds)
        .unwrap_or(usize::MAX)
        .min(options.solver.iteration_cap.max(1));
    let interval = options.solver.check_interval.max(1);
    let rule = options.solver.stop;
    let mut h1_sum = 0.0;
    let mut inner_solves = 0;
    let mut stop = StopReason::ScheduleComplete;
    let mut bounds = None;

    for t in 1..=budget {
        let response = best_response(inst, engine.density(), inner_delta, options)?;
        inner_solves += 1;
        h1_sum += response.value;
        let loss = inst.loss(&response.sigma_y, &response.pi)?;
        engine.observe(loss.shift(width).scale(0.5 / width))?;
        if rule != StopRule::FullSchedule && (t % interval == 0 || t == budget) {
            let (upper, lower) = outer_bounds(inst, &engine, width, inner_delta, options)?;
            inner_solves += 1;
            bounds = Some((upper, lower));
            if stop_satisfied(rule, upper, lower, delta) {
                debug!("certified stop after {t} rounds: [{lower:.6}, {upper:.6}]");
                stop = StopReason::Certified;
                break;
            }
        }
    }

    let rounds = engine.rounds_run();
    let (upper, lower) = match bounds {
        Some(b) if stop == StopReason::Certified => b,
        _ => {
            inner_solves += 1;
            outer_bounds(inst, &engine, width, inner_delta, options)?
        }
    };
    if stop != StopReason::Certified && (rounds as u64) < schedule.rounds && upper - lower > delta {
        return Err(Error::PrecisionNotReached {
            rounds,
            gap: upper - lower,
            target: delta,
        });
    }
    let average = h1_sum / rounds as f64;
    let mu_bar = average.max(lower).min(upper.max(lower));
    Ok(Qrg2Outcome {
        mu_bar,
        decision: mu_bar >= 0.0,
        lower_bound: lower,
        upper_bound: upper,
        schedule,
        inner_delta,
        rounds_executed: rounds,
        stop,
        sigma_n_bar: engine.average_density()?,
        inner_solves,
    })
}

/// Decision at threshold 0: the outer loop stops as soon as the sign of the
/// value is certified, so `mu_bar` is only guaranteed on the decided side.
pub fn decide_qrg2(inst: &Qrg2Instance) -> Result<bool> {
    Ok(decide_qrg2_with(inst, &Qrg2Options::default())?.decision)
}

pub fn decide_qrg2_with(inst: &Qrg2Instance, options: &Qrg2Options) -> Result<Qrg2Outcome> {
    let mut opts = options.clone();
    if opts.solver.stop != StopRule::FullSchedule {
        opts.solver.stop = StopRule::Decision {
            accept_below: 0.0,
            reject_above: 0.0,
        };
    }
    solve_qrg2_with(inst, inst.gap() / 8.0, &opts)
}

/// `(max h1(., sigma_bar), lambda_min(avg N))`.
fn outer_bounds(
    inst: &Qrg2Instance,
    engine: &MmwEngine,
    width: f64,
    inner_delta: f64,
    options: &Qrg2Options,
) -> Result<(f64, f64)> {
    let t = engine.rounds_run().max(1) as f64;
    let lower = 2.0 * width * engine.cumulative_spectrum().min() / t - width;
    let upper = best_response(inst, &engine.average_density()?, inner_delta, options)?.upper;
    Ok((upper, lower))
}

/// `min_{sigma_N} max_{sigma_Y} <R, sigma_Y ⊗ sigma_N>` by exhaustive search
/// over a Bloch-ball grid of spacing `resolution` for the minimizing side,
/// with the maximizing side in closed form. Each player's space `V ⊗ message`
/// may have side at most 2: with `V` trivial the strategy set is the whole
/// Bloch ball, with a trivial message register it is the initial state alone.
pub fn game_value_oracle(inst: &Qrg2Instance, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::param(format!(
            "resolution {resolution} outside (0, 1]"
        )));
    }
    let [vy, y, vn, n] = inst.dims;
    if vy * y > GRID_ORACLE_MAX_SIDE || vn * n > GRID_ORACLE_MAX_SIDE {
        return Err(Error::dims(format!(
            "grid oracle needs each player space of side at most {GRID_ORACLE_MAX_SIDE}, got {:?}",
            inst.dims
        )));
    }
    let yes_free = vy == 1 && y > 1;
    let value_at = |m: &TensoredHermitian| -> Result<f64> {
        if yes_free {
            Ok(m.eig().max())
        } else {
            inst.yes_state.density().expectation(m)
        }
    };
    if !(vn == 1 && n > 1) {
        return value_at(&inst.yes_measurement(&inst.no_state.density())?);
    }
    // the effective measurement is affine in the Bloch vector of sigma_N
    let centre = inst.yes_measurement(&DensityOperator::maximally_mixed(inst.no_dims()))?;
    let mut axes = Vec::with_capacity(3);
    for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
        let pole = bloch_state(axis[0], axis[1], axis[2], inst.no_dims())?;
        axes.push(inst.yes_measurement(&pole)?.sub(&centre)?);
    }
    let mut best = f64::INFINITY;
    for [x, yy, z] in bloch_ball_grid(resolution) {
        let mut m = centre.clone();
        m.add_assign_scaled(&axes[0], x);
        m.add_assign_scaled(&axes[1], yy);
        m.add_assign_scaled(&axes[2], z);
        best = best.min(value_at(&m)?);
    }
    Ok(best)
}

/// Points of the cubic lattice with spacing `resolution` inside the unit ball,
/// plus the lattice directions projected to the sphere.
pub(crate) fn bloch_ball_grid(resolution: f64) -> Vec<[f64; 3]> {
    let steps = (1.0 / resolution).ceil() as i64;
    let h = 1.0 / steps as f64;
    let mut points = Vec::new();
    for i in -steps..=steps {
        for j in -steps..=steps {
            for k in -steps..=steps {
                let p = [i as f64 * h, j as f64 * h, k as f64 * h];
                let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                if r2 <= 1.0 + 1e-12 {
                    points.push(p);
                } else if r2 <= (1.0 + 2.0 * h) * (1.0 + 2.0 * h) {
                    let r = r2.sqrt();
                    points.push([p[0] / r, p[1] / r, p[2] / r]);
                }
            }
        }
    }
    points
}

/// `(I + x X + y Y + z Z) / 2` with the given dims (side 2).
pub(crate) fn bloch_state(x: f64, y: f64, z: f64, dims: Vec<usize>) -> Result<DensityOperator> {
    use crate::linalg::{CMatrix, C64};
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ],
    );
    DensityOperator::project(TensoredHermitian::new(dims, m)?)
}
