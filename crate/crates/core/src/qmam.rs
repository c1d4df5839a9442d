//! Two-register equilibrium problem for merlin-arthur-merlin style proofs:
//! maximize `<R, rho>` over states on `A ⊗ X ⊗ Y` whose `A ⊗ X` marginal is
//! `I_A / 2 ⊗ sigma` for some state `sigma` on `X`.

use log::debug;

use crate::error::{Error, Result};
use crate::framework1::{
    average_loss_floor, stop_satisfied, BlockOperator, DualCertificate, Schedule, SolverOptions,
    StopReason, StopRule,
};
use crate::linalg::TensoredHermitian;
use crate::mmw::{MmwEngine, MmwTrace};
use crate::qip2::{check_measurement, Promise};
use crate::states::DensityOperator;

/// Width used for both registers.
pub const QMAM_WIDTH: f64 = 3.0;
const QUBIT: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct QmamInstance {
    pub x_dim: usize,
    pub y_dim: usize,
    /// Measurement on `A ⊗ X ⊗ Y`, `A` a qubit.
    pub measurement: TensoredHermitian,
    pub promise: Promise,
}

impl QmamInstance {
    pub fn new(
        x_dim: usize,
        y_dim: usize,
        measurement: TensoredHermitian,
        promise: Promise,
    ) -> Result<Self> {
        if x_dim == 0 || y_dim == 0 {
            return Err(Error::dims("register dims must be positive"));
        }
        let measurement = measurement.with_dims(vec![QUBIT, x_dim, y_dim])?;
        check_measurement(&measurement)?;
        promise.validate()?;
        Ok(Self {
            x_dim,
            y_dim,
            measurement,
            promise,
        })
    }

    pub fn rho_dims(&self) -> Vec<usize> {
        vec![QUBIT, self.x_dim, self.y_dim]
    }

    pub fn sigma_dims(&self) -> Vec<usize> {
        vec![self.x_dim]
    }

    pub fn constraint_dims(&self) -> Vec<usize> {
        vec![QUBIT, self.x_dim]
    }
}

/// `S1(rho) = diag(c - <R, rho>, tr_Y rho)` and `S2(sigma) = diag(0, -I_A/2 ⊗ sigma)`.
pub fn build_s1_s2(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    inst: &QmamInstance,
    guess: f64,
) -> Result<(BlockOperator, BlockOperator)> {
    check_state(rho, &inst.rho_dims(), "rho")?;
    check_state(sigma, &inst.sigma_dims(), "sigma")?;
    let s1 = BlockOperator {
        scalar: guess - rho.expectation(&inst.measurement)?,
        block: rho.op().partial_trace(2)?,
    };
    let s2 = BlockOperator {
        scalar: 0.0,
        block: sigma.op().embed_identity(0, QUBIT)?.scale(-0.5),
    };
    Ok((s1, s2))
}

fn check_state(state: &DensityOperator, dims: &[usize], name: &str) -> Result<()> {
    let side: usize = dims.iter().product();
    if state.side() != side {
        return Err(Error::dims(format!(
            "{name} has side {}, expected {side}",
            state.side()
        )));
    }
    Ok(())
}

/// Sum of the two block operators.
pub fn combined_s(s1: &BlockOperator, s2: &BlockOperator) -> Result<BlockOperator> {
    Ok(BlockOperator {
        scalar: s1.scalar + s2.scalar,
        block: s1.block.add(&s2.block)?,
    })
}

/// `N1(Pi) = -p R + P ⊗ I_Y + p c I` and `N2(Pi) = -tr_A(P) / 2`.
pub fn build_n1_n2(
    pi: &DualCertificate,
    inst: &QmamInstance,
    guess: f64,
) -> Result<(TensoredHermitian, TensoredHermitian)> {
    let side: usize = inst.constraint_dims().iter().product();
    if pi.projector.side() != side {
        return Err(Error::dims(format!(
            "dual block side {}, expected {side}",
            pi.projector.side()
        )));
    }
    let p_block = pi.projector.clone().with_dims(inst.constraint_dims())?;
    let mut n1 = p_block
        .tensor(&TensoredHermitian::identity(vec![inst.y_dim]))
        .shift(pi.p * guess);
    n1.add_assign_scaled(&inst.measurement, -pi.p);
    let n2 = p_block.partial_trace(0)?.scale(-0.5);
    Ok((n1, n2))
}

#[derive(Clone, Debug)]
pub struct QmamOutcome {
    /// Upper bound on the equilibrium value: the smaller of the running payoff
    /// average and `max_Pi <S1(rho) + S2(sigma), Pi>` at the returned pair.
    pub value: f64,
    /// `lambda_min(avg N1) + lambda_min(avg N2)` over all rounds or the current
    /// epoch, whichever is larger.
    pub lower_bound: f64,
    /// Running average of `<S1(rho_t) + S2(sigma_t), Pi_t>`.
    pub payoff_average: f64,
    /// Set by [`decide_qmam`]; `None` for plain solves.
    pub decision: Option<bool>,
    pub guess: f64,
    pub schedule: Schedule,
    pub rounds_executed: usize,
    pub stop: StopReason,
    pub rho_bar: DensityOperator,
    pub sigma_bar: DensityOperator,
    pub traces: Option<(MmwTrace, MmwTrace)>,
}

pub fn solve_qmam(inst: &QmamInstance, guess: f64, delta: f64) -> Result<QmamOutcome> {
    solve_qmam_with(inst, guess, delta, &SolverOptions::default())
}

/// Independent weight updates on `rho` and `sigma` against the common best
/// response `Pi_t`, sharing one step size and schedule computed from width 3
/// and `D = dim(A ⊗ X ⊗ Y)`.
///
/// With two registers the schedule alone bounds the error by `2 delta`, so the
/// loop keeps running past `T` (up to the iteration cap) until the stop rule is
/// certified. Under [`StopRule::FullSchedule`] exactly `T` rounds are run and
/// the returned pair is the running average.
pub fn solve_qmam_with(
    inst: &QmamInstance,
    guess: f64,
    delta: f64,
    options: &SolverOptions,
) -> Result<QmamOutcome> {
    if !guess.is_finite() {
        return Err(Error::NonFinite("guess value".into()));
    }
    let schedule = Schedule::new(delta, QMAM_WIDTH, inst.rho_dims().iter().product())?;
    let record = options.record_trace;
    let mut rho_engine = MmwEngine::new(inst.rho_dims(), schedule.epsilon, record)?;
    let mut sigma_engine = MmwEngine::new(inst.sigma_dims(), schedule.epsilon, record)?;
    let scheduled = usize::try_from(schedule.rounds).unwrap_or(usize::MAX);
    let cap = options.iteration_cap.max(1);
    let budget = if options.stop == StopRule::FullSchedule {
        scheduled.min(cap)
    } else {
        cap
    };
    let interval = options.check_interval.max(1);
    let r = QMAM_WIDTH;
    let mut payoff_sum = 0.0;
    let mut stop = StopReason::ScheduleComplete;
    let mut certified = false;
    let full = options.stop == StopRule::FullSchedule;

    for t in 1..=budget {
        let (s1, s2) = build_s1_s2(rho_engine.density(), sigma_engine.density(), inst, guess)?;
        let (pi, payoff) = combined_s(&s1, &s2)?.positive_response();
        payoff_sum += payoff;
        let (n1, n2) = build_n1_n2(&pi, inst, guess)?;
        rho_engine.observe(n1.shift(r).scale(0.5 / r))?;
        sigma_engine.observe(n2.shift(r).scale(0.5 / r))?;
        let due = t % interval == 0 || t == budget || t == scheduled;
        if !full && due {
            let cert =
                PairCertificate::evaluate(&rho_engine, &sigma_engine, inst, guess, payoff_sum)?;
            if stop_satisfied(options.stop, cert.upper, cert.lower, delta) {
                debug!(
                    "certified stop after {t} rounds (schedule {}): [{:.6}, {:.6}]",
                    schedule.rounds, cert.lower, cert.upper
                );
                stop = StopReason::Certified;
                certified = true;
                break;
            }
        }
    }

    let rounds = rho_engine.rounds_run();
    let cert = if full {
        PairCertificate::running_average(&rho_engine, &sigma_engine, payoff_sum)?
    } else {
        PairCertificate::evaluate(&rho_engine, &sigma_engine, inst, guess, payoff_sum)?
    };
    let (value, lower_bound) = (cert.upper, cert.lower);
    if !full && !certified {
        let decided_by_schedule =
            matches!(options.stop, StopRule::Decision { .. }) && rounds >= scheduled;
        if !decided_by_schedule {
            return Err(Error::PrecisionNotReached {
                rounds,
                gap: value - lower_bound,
                target: delta,
            });
        }
    }
    if full && (rounds as u64) < schedule.rounds && value - lower_bound > 2.0 * delta {
        return Err(Error::PrecisionNotReached {
            rounds,
            gap: value - lower_bound,
            target: delta,
        });
    }
    Ok(QmamOutcome {
        value,
        lower_bound,
        payoff_average: payoff_sum / rounds.max(1) as f64,
        decision: None,
        guess,
        schedule,
        rounds_executed: rounds,
        stop,
        rho_bar: cert.rho,
        sigma_bar: cert.sigma,
        traces: record.then(|| (rho_engine.into_trace(), sigma_engine.into_trace())),
    })
}

struct PairCertificate {
    upper: f64,
    lower: f64,
    rho: DensityOperator,
    sigma: DensityOperator,
}

impl PairCertificate {
    /// Running payoff average against the running-average pair.
    fn running_average(
        rho_engine: &MmwEngine,
        sigma_engine: &MmwEngine,
        payoff_sum: f64,
    ) -> Result<Self> {
        let t = rho_engine.rounds_run();
        let lower = average_loss_floor(rho_engine.cumulative_spectrum().min(), t, QMAM_WIDTH)
            + average_loss_floor(sigma_engine.cumulative_spectrum().min(), t, QMAM_WIDTH);
        Ok(Self {
            upper: payoff_sum / t.max(1) as f64,
            lower,
            rho: rho_engine.average_density()?,
            sigma: sigma_engine.average_density()?,
        })
    }

    /// Best bounds over the running-average, epoch-average and current pairs.
    /// Both engines advance together, so their epochs coincide.
    fn evaluate(
        rho_engine: &MmwEngine,
        sigma_engine: &MmwEngine,
        inst: &QmamInstance,
        guess: f64,
        payoff_sum: f64,
    ) -> Result<Self> {
        let mut best = Self::running_average(rho_engine, sigma_engine, payoff_sum)?;
        let mut candidates = vec![
            (best.rho.clone(), best.sigma.clone()),
            (rho_engine.density().clone(), sigma_engine.density().clone()),
        ];
        if let (Some((rho, rho_loss)), Some((sigma, sigma_loss))) =
            (rho_engine.epoch_averages(), sigma_engine.epoch_averages())
        {
            let epoch_lower = average_loss_floor(rho_loss.eig().min(), 1, QMAM_WIDTH)
                + average_loss_floor(sigma_loss.eig().min(), 1, QMAM_WIDTH);
            best.lower = best.lower.max(epoch_lower);
            candidates.push((rho, sigma));
        }
        for (rho, sigma) in candidates {
            let (s1, s2) = build_s1_s2(&rho, &sigma, inst, guess)?;
            let upper = combined_s(&s1, &s2)?.positive_response().1;
            if upper < best.upper {
                best = Self {
                    upper,
                    rho,
                    sigma,
                    ..best
                };
            }
        }
        Ok(best)
    }
}

pub fn decide_qmam(inst: &QmamInstance) -> Result<bool> {
    Ok(decide_qmam_with(inst, &SolverOptions::default())?
        .decision
        .unwrap_or(false))
}

/// Guess `(c + s) / 2`, precision `gap^2 / 32`; accepts iff the value is at most `gap^2 / 16`.
pub fn decide_qmam_with(inst: &QmamInstance, options: &SolverOptions) -> Result<QmamOutcome> {
    let gap = inst.promise.gap();
    let threshold = gap * gap / 16.0;
    let mut opts = options.clone();
    if opts.stop != StopRule::FullSchedule {
        opts.stop = StopRule::Decision {
            accept_below: threshold,
            reject_above: threshold,
        };
    }
    let mut out = solve_qmam_with(inst, inst.promise.midpoint(), gap * gap / 32.0, &opts)?;
    out.decision = Some(out.value <= threshold);
    Ok(out)
}
