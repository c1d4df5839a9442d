//! Matrix multiplicative weights over density operators with loss matrices in `[0, I]`.

use crate::error::{Error, Result};
use crate::linalg::{check_dims, EigDecomposition, TensoredHermitian};
use crate::states::DensityOperator;

/// Slack allowed on the `0 <= M <= I` bounds of each loss.
pub const LOSS_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MmwConfig {
    pub epsilon: f64,
    pub rounds: usize,
    /// Subsystem dims of the space the weights live on; `D` is their product.
    pub dims: Vec<usize>,
}

impl MmwConfig {
    pub fn new(epsilon: f64, rounds: usize, dims: Vec<usize>) -> Result<Self> {
        let cfg = Self {
            epsilon,
            rounds,
            dims,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dimension(&self) -> usize {
        self.dims.iter().product()
    }

    fn validate(&self) -> Result<()> {
        check_dims(&self.dims)?;
        check_epsilon(self.epsilon)?;
        if self.rounds == 0 {
            return Err(Error::param("rounds must be positive"));
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::param(format!("epsilon {epsilon} outside (0, 1/2]")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MmwRound {
    pub density: DensityOperator,
    pub loss: TensoredHermitian,
    pub expected_loss: f64,
}

/// Record of a completed run. `rounds` is empty when per-round recording was off;
/// the aggregate fields are always filled.
#[derive(Clone, Debug)]
pub struct MmwTrace {
    pub epsilon: f64,
    pub dimension: usize,
    pub rounds: Vec<MmwRound>,
    pub rounds_run: usize,
    /// `sum_t <rho_t, M_t>`
    pub loss_sum: f64,
    /// `sum_t M_t`
    pub cumulative: TensoredHermitian,
}

/// Incremental form of the update loop: feed one loss at a time and read the
/// next density operator. Weights are recomputed from the cumulative loss each
/// round, after shifting it so that its smallest eigenvalue is zero.
#[derive(Clone, Debug)]
pub struct MmwEngine {
    epsilon: f64,
    cumulative: TensoredHermitian,
    spectrum: EigDecomposition,
    density: DensityOperator,
    density_sum: TensoredHermitian,
    rounds_run: usize,
    loss_sum: f64,
    history: Option<Vec<MmwRound>>,
    epoch: Epoch,
}

/// Sums over the rounds since the last power of two.
#[derive(Clone, Debug)]
struct Epoch {
    start: usize,
    density_sum: TensoredHermitian,
    loss_sum: TensoredHermitian,
}

impl MmwEngine {
    pub fn new(dims: Vec<usize>, epsilon: f64, record: bool) -> Result<Self> {
        check_dims(&dims)?;
        check_epsilon(epsilon)?;
        let cumulative = TensoredHermitian::zeros(dims.clone());
        let spectrum = cumulative.eig();
        Ok(Self {
            epsilon,
            density: DensityOperator::maximally_mixed(dims.clone()),
            density_sum: TensoredHermitian::zeros(dims.clone()),
            epoch: Epoch {
                start: 0,
                density_sum: TensoredHermitian::zeros(dims.clone()),
                loss_sum: TensoredHermitian::zeros(dims),
            },
            cumulative,
            spectrum,
            rounds_run: 0,
            loss_sum: 0.0,
            history: record.then(Vec::new),
        })
    }

    /// Current iterate `rho_t` (the one the next loss will be charged against).
    pub fn density(&self) -> &DensityOperator {
        &self.density
    }

    pub fn rounds_run(&self) -> usize {
        self.rounds_run
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cumulative(&self) -> &TensoredHermitian {
        &self.cumulative
    }

    /// Eigendecomposition of the cumulative loss `sum_t M_t`.
    pub fn cumulative_spectrum(&self) -> &EigDecomposition {
        &self.spectrum
    }

    pub fn loss_sum(&self) -> f64 {
        self.loss_sum
    }

    /// Average of the iterates charged so far; the maximally mixed state before any round.
    pub fn average_density(&self) -> Result<DensityOperator> {
        if self.rounds_run == 0 {
            return Ok(self.density.clone());
        }
        Ok(DensityOperator::from_trusted(
            self.density_sum.scale(1.0 / self.rounds_run as f64),
        ))
    }

    /// Average iterate and average loss over the current epoch, which restarts
    /// whenever the round count reaches a power of two. `None` right after a restart.
    pub fn epoch_averages(&self) -> Option<(DensityOperator, TensoredHermitian)> {
        let len = self.rounds_run - self.epoch.start;
        if len == 0 {
            return None;
        }
        let w = 1.0 / len as f64;
        Some((
            DensityOperator::from_trusted(self.epoch.density_sum.scale(w)),
            self.epoch.loss_sum.scale(w),
        ))
    }

    /// Charges `loss` against the current iterate and advances. Returns `<rho_t, M_t>`.
    pub fn observe(&mut self, loss: TensoredHermitian) -> Result<f64> {
        if loss.side() != self.cumulative.side() {
            return Err(Error::dims(format!(
                "loss of side {} for weights of side {}",
                loss.side(),
                self.cumulative.side()
            )));
        }
        check_loss(&loss, self.rounds_run + 1)?;
        let expected = self.density.expectation(&loss)?;
        if !expected.is_finite() {
            return Err(Error::NonFinite(format!(
                "expected loss at round {}",
                self.rounds_run + 1
            )));
        }
        self.loss_sum += expected;
        self.density_sum.add_assign_scaled(self.density.op(), 1.0);
        self.cumulative.add_assign_scaled(&loss, 1.0);
        if self.rounds_run > 0 && self.rounds_run.is_power_of_two() {
            self.epoch.start = self.rounds_run;
            self.epoch.density_sum = TensoredHermitian::zeros(self.cumulative.dims().to_vec());
            self.epoch.loss_sum = TensoredHermitian::zeros(self.cumulative.dims().to_vec());
        }
        self.epoch
            .density_sum
            .add_assign_scaled(self.density.op(), 1.0);
        self.epoch.loss_sum.add_assign_scaled(&loss, 1.0);
        if let Some(history) = self.history.as_mut() {
            history.push(MmwRound {
                density: self.density.clone(),
                loss,
                expected_loss: expected,
            });
        }
        self.rounds_run += 1;
        self.spectrum = self.cumulative.eig();
        self.density = weights_density(&self.spectrum, self.epsilon)?;
        Ok(expected)
    }

    pub fn into_trace(self) -> MmwTrace {
        MmwTrace {
            epsilon: self.epsilon,
            dimension: self.cumulative.side(),
            rounds: self.history.unwrap_or_default(),
            rounds_run: self.rounds_run,
            loss_sum: self.loss_sum,
            cumulative: self.cumulative,
        }
    }
}

/// `exp(-eps * Sigma) / tr`, evaluated on the spectrum shifted by `-lambda_min`.
fn weights_density(spectrum: &EigDecomposition, epsilon: f64) -> Result<DensityOperator> {
    let floor = spectrum.min();
    let total: f64 = spectrum
        .values
        .iter()
        .map(|&l| (-epsilon * (l - floor)).exp())
        .sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::NonFinite("weight normalization".into()));
    }
    Ok(DensityOperator::from_trusted(
        spectrum.map(|l| (-epsilon * (l - floor)).exp() / total),
    ))
}

/// Checks `-tol <= M <= (1 + tol) I`, first through Gershgorin discs and only
/// falling back to an eigendecomposition when they are inconclusive.
fn check_loss(loss: &TensoredHermitian, round: usize) -> Result<()> {
    let m = loss.matrix();
    let n = m.nrows();
    let mut inside = true;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum();
        let centre = m[(i, i)].re;
        if !centre.is_finite() || !radius.is_finite() {
            return Err(Error::NonFinite(format!("loss at round {round}")));
        }
        if centre - radius < -LOSS_TOLERANCE || centre + radius > 1.0 + LOSS_TOLERANCE {
            inside = false;
            break;
        }
    }
    if inside {
        return Ok(());
    }
    let values = loss.eigenvalues();
    let (max, min) = (values[0], values[values.len() - 1]);
    if min < -LOSS_TOLERANCE || max > 1.0 + LOSS_TOLERANCE {
        return Err(Error::LossOutOfRange { round, min, max });
    }
    Ok(())
}

/// Runs `cfg.rounds` rounds, asking `loss_oracle(t, rho_t)` (with `t` starting
/// at 1) for each loss, and records every round.
pub fn run_mmw<F>(mut loss_oracle: F, cfg: &MmwConfig) -> Result<MmwTrace>
where
    F: FnMut(usize, &DensityOperator) -> Result<TensoredHermitian>,
{
    cfg.validate()?;
    let mut engine = MmwEngine::new(cfg.dims.clone(), cfg.epsilon, true)?;
    for t in 1..=cfg.rounds {
        let loss = loss_oracle(t, engine.density())?;
        engine.observe(loss)?;
    }
    Ok(engine.into_trace())
}

/// Both sides of the regret inequality
/// `(1 - eps) sum_t <rho_t, M_t> <= <rho*, sum_t M_t> + ln D / eps`.
pub fn regret_certificate(trace: &MmwTrace, rho_star: &DensityOperator) -> Result<(f64, f64)> {
    let lhs = (1.0 - trace.epsilon) * trace.loss_sum;
    let rhs =
        rho_star.expectation(&trace.cumulative)? + (trace.dimension as f64).ln() / trace.epsilon;
    Ok((lhs, rhs))
}
