use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use eqsdp::framework1::{solve_equilibrium_with, SolverOptions};
use eqsdp::generate::{gen_qip2, gen_qmam, gen_qrg2};
use eqsdp::io::{Instance, InstanceFile};
use eqsdp::oracle::{bloch_grid_reference, frank_wolfe_qmam_reference, frank_wolfe_reference};
use eqsdp::qip2::{
    decide_feasibility_with, decide_promise_with, solve_optimum_with, to_instance, Probe, Promise,
    Qip2Instance,
};
use eqsdp::qmam::{decide_qmam_with, solve_qmam_with, QmamInstance};
use eqsdp::qrg2::{
    decide_qrg2_with, game_value_oracle, solve_qrg2_with, InnerSolver, Qrg2Instance, Qrg2Options,
};

use crate::report::{
    Clock, InstanceSummary, OracleComparison, Parameters, ProbeSummary, RunReport,
};
use crate::{Cli, Command, InnerChoice, KindChoice, OracleChoice, ReportFormat};

const DEFAULT_DELTA: f64 = 0.05;
const DEFAULT_OPTIMUM_DELTA: f64 = 0.02;
const DEFAULT_GUESS: f64 = 0.5;
/// Slack allowed on top of `delta` and the oracle's own gap.
const FW_SLACK: f64 = 2e-3;
const QMAM_FW_SLACK: f64 = 5e-3;

pub fn run(cli: &Cli) -> Result<()> {
    if cli.command == Command::Gen {
        return generate(cli);
    }
    let file = read_input(cli)?;
    let instance = file.to_instance().context("invalid instance")?;
    let mut clock = Clock::new(!cli.deterministic);
    let mut report = RunReport::new(command_name(cli.command), InstanceSummary::of(&file));
    match (cli.command, &instance) {
        (Command::Solve, Instance::Qip2(q)) => solve(cli, q, &mut report, &mut clock)?,
        (Command::Optimum, Instance::Qip2(q)) => optimum(cli, q, &mut report, &mut clock)?,
        (Command::Qmam, Instance::Qmam(q)) => qmam(cli, q, &mut report, &mut clock)?,
        (Command::Qrg2, Instance::Qrg2(q)) => qrg2(cli, q, &mut report, &mut clock)?,
        (Command::Verify, Instance::Qip2(q)) => verify_qip2(cli, q, &mut report, &mut clock)?,
        (Command::Verify, Instance::Qmam(q)) => verify_qmam(cli, q, &mut report, &mut clock)?,
        (Command::Verify, Instance::Qrg2(q)) => verify_qrg2(cli, q, &mut report, &mut clock)?,
        (command, other) => bail!(
            "`{}` does not accept {} instances",
            command_name(command),
            other.kind().name()
        ),
    }
    report.timings = clock.finish();
    let text = match cli.report {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Text => report.to_text(),
    };
    emit(cli, &text)
}

fn command_name(command: Command) -> &'static str {
    match command {
        Command::Gen => "gen",
        Command::Solve => "solve",
        Command::Optimum => "optimum",
        Command::Qmam => "qmam",
        Command::Qrg2 => "qrg2",
        Command::Verify => "verify",
    }
}

fn read_input(cli: &Cli) -> Result<InstanceFile> {
    let (text, source) = match &cli.input {
        Some(path) => (
            std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?,
            path.display().to_string(),
        ),
        None => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .context("cannot read stdin")?;
            (text, "<stdin>".to_string())
        }
    };
    InstanceFile::parse(&text).with_context(|| format!("malformed instance in {source}"))
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn generate(cli: &Cli) -> Result<()> {
    let dims = &cli.dims;
    let promise = match &cli.promise {
        Some(p) => match p[..] {
            [c, s] => Some(Promise::new(c, s)?),
            _ => bail!("--promise takes two values COMPLETENESS,SOUNDNESS"),
        },
        None => None,
    };
    let file = match cli.kind {
        KindChoice::Qip2 => {
            let [m, v] = dims[..] else {
                bail!("qip2 needs --dims M,V")
            };
            let mut q = gen_qip2(m, v, cli.seed)?;
            if promise.is_some() {
                q = Qip2Instance::new(
                    q.message_dim,
                    q.verifier_dim,
                    q.initial,
                    q.measurement,
                    promise,
                )?;
            }
            InstanceFile::from_qip2(&q, Some(cli.seed))
        }
        KindChoice::Qmam => {
            let [x, y] = dims[..] else {
                bail!("qmam needs --dims X,Y")
            };
            let mut q = gen_qmam(x, y, cli.seed)?;
            if let Some(p) = promise {
                q = QmamInstance::new(q.x_dim, q.y_dim, q.measurement, p)?;
            }
            InstanceFile::from_qmam(&q, Some(cli.seed))
        }
        KindChoice::Qrg2 => {
            let [a, b, c, d] = dims[..] else {
                bail!("qrg2 needs --dims VY,Y,VN,N")
            };
            let mut q = gen_qrg2([a, b, c, d], cli.seed)?;
            if let Some(p) = promise {
                q = Qrg2Instance::new(q.dims, q.yes_state, q.no_state, q.measurement, p)?;
            }
            InstanceFile::from_qrg2(&q, Some(cli.seed))
        }
    };
    emit(cli, &file.to_canonical_string())
}

fn solver_options(cli: &Cli) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(cap) = cli.iterations_cap {
        opts.iteration_cap = cap;
    }
    opts
}

fn solve(cli: &Cli, q: &Qip2Instance, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let opts = solver_options(cli);
    let verdict = match (cli.guess, q.promise) {
        (Some(guess), _) => {
            report.value("guess", guess);
            clock.time("solve", || {
                decide_feasibility_with(q, guess, cli.delta.unwrap_or(DEFAULT_DELTA), &opts)
            })?
        }
        (None, Some(p)) => {
            report.value("guess", p.midpoint());
            clock.time("solve", || decide_promise_with(q, &opts))?
        }
        (None, None) => bail!("solve needs --guess or an instance with a promise"),
    };
    let eq = &verdict.equilibrium;
    report.parameters = Some(Parameters::from(&eq.schedule));
    report.rounds_executed = Some(eq.rounds_executed);
    report.value("value", eq.value);
    report.value("lower_bound", eq.lower_bound);
    if let (Some(w), Some(g)) = (&verdict.witness, verdict.guarantee) {
        report.value("guarantee", g);
        report.value("witness_objective", q.acceptance(w)?);
        report.value("witness_marginal_error", q.marginal_residue(w)?);
    }
    report.verdict = format!("{:?}", verdict.kind);
    Ok(())
}

fn probe_summary(p: &Probe, phase: &str) -> ProbeSummary {
    ProbeSummary {
        phase: phase.to_string(),
        guess: p.guess,
        verdict: format!("{:?}", p.kind),
        value: p.value,
        witness_objective: p.witness_objective,
        rounds_executed: p.rounds_executed,
        parameters: Parameters::from(&p.schedule),
    }
}

fn optimum(cli: &Cli, q: &Qip2Instance, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let delta = cli.delta.unwrap_or(DEFAULT_OPTIMUM_DELTA);
    let out = clock.time("search", || {
        solve_optimum_with(q, delta, &solver_options(cli))
    })?;
    report.parameters = out.probes.first().map(|p| Parameters::from(&p.schedule));
    report.value("alpha_estimate", out.alpha_estimate);
    report.value("lower", out.lower);
    report.value("upper", out.upper);
    report.value("witness_objective", out.witness_objective);
    report.value("witness_marginal_error", q.marginal_residue(&out.witness)?);
    report
        .probes
        .extend(out.probes.iter().map(|p| probe_summary(p, "search")));
    report
        .probes
        .extend(out.refinements.iter().map(|p| probe_summary(p, "refine")));
    report.verdict = "Optimum".into();
    Ok(())
}

fn qmam(cli: &Cli, q: &QmamInstance, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let opts = solver_options(cli);
    let out = match cli.guess {
        Some(guess) => {
            let delta = cli.delta.unwrap_or(DEFAULT_DELTA);
            clock.time("solve", || solve_qmam_with(q, guess, delta, &opts))?
        }
        None => clock.time("decide", || decide_qmam_with(q, &opts))?,
    };
    report.parameters = Some(Parameters::from(&out.schedule));
    report.rounds_executed = Some(out.rounds_executed);
    report.value("guess", out.guess);
    report.value("value", out.value);
    report.value("lower_bound", out.lower_bound);
    report.value("payoff_average", out.payoff_average);
    report.verdict = match out.decision {
        Some(true) => "Accept".into(),
        Some(false) => "Reject".into(),
        None if out.value <= out.schedule.delta => "ApproximatelyFeasible".into(),
        None => "Infeasible".into(),
    };
    Ok(())
}

fn qrg2_options(cli: &Cli) -> Qrg2Options {
    let opts = solver_options(cli);
    Qrg2Options {
        solver: opts.clone(),
        inner: match cli.inner {
            InnerChoice::Auto => InnerSolver::Auto,
            InnerChoice::Nested => InnerSolver::Nested,
        },
        inner_solver: opts,
    }
}

fn qrg2(cli: &Cli, q: &Qrg2Instance, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let opts = qrg2_options(cli);
    let out = match cli.delta {
        Some(delta) => clock.time("solve", || solve_qrg2_with(q, delta, &opts))?,
        None => clock.time("decide", || decide_qrg2_with(q, &opts))?,
    };
    report.parameters = Some(Parameters::from(&out.schedule));
    report.rounds_executed = Some(out.rounds_executed);
    report.value("mu_bar", out.mu_bar);
    report.value("lower_bound", out.lower_bound);
    report.value("upper_bound", out.upper_bound);
    report.value("inner_delta", out.inner_delta);
    report.value("inner_solves", out.inner_solves as f64);
    report.verdict = if out.decision { "Accept" } else { "Reject" }.into();
    Ok(())
}

fn uses_fw(cli: &Cli) -> bool {
    matches!(
        cli.oracle,
        None | Some(OracleChoice::Fw | OracleChoice::Both)
    )
}

fn uses_grid(cli: &Cli) -> bool {
    matches!(cli.oracle, Some(OracleChoice::Grid | OracleChoice::Both))
}

fn compare(
    method: &str,
    solver: f64,
    oracle: f64,
    oracle_gap: f64,
    tolerance: f64,
) -> OracleComparison {
    let difference = (solver - oracle).abs();
    OracleComparison {
        method: method.into(),
        solver_value: solver,
        oracle_value: oracle,
        oracle_gap,
        difference: Some(difference),
        tolerance: Some(tolerance),
        agrees: difference <= tolerance,
    }
}

fn finish_verify(report: &mut RunReport) {
    report.verdict = if report.oracle.iter().all(|o| o.agrees) {
        "Agree"
    } else {
        "Disagree"
    }
    .into();
}

/// Equilibrium value at `--guess` against Frank-Wolfe and, for a qubit
/// primal space, the Bloch grid.
fn verify_qip2(
    cli: &Cli,
    q: &Qip2Instance,
    report: &mut RunReport,
    clock: &mut Clock,
) -> Result<()> {
    let guess = cli.guess.unwrap_or(DEFAULT_GUESS);
    let delta = cli.delta.unwrap_or(DEFAULT_DELTA);
    let inst = to_instance(q, guess)?;
    let grid_ok = inst.primal_side() == 2;
    if cli.oracle == Some(OracleChoice::Grid) && !grid_ok {
        bail!(
            "the grid oracle needs a two-dimensional primal space, got {}",
            inst.primal_side()
        );
    }
    let out = clock.time("solve", || {
        solve_equilibrium_with(&inst, delta, &solver_options(cli))
    })?;
    report.parameters = Some(Parameters::from(&out.schedule));
    report.rounds_executed = Some(out.rounds_executed);
    report.value("guess", guess);
    report.value("value", out.value);
    report.value("lower_bound", out.lower_bound);
    if uses_fw(cli) {
        let fw = clock.time("frank_wolfe", || {
            frank_wolfe_reference(&inst, cli.oracle_iterations)
        })?;
        let tol = delta + FW_SLACK + fw.certified_gap;
        report.oracle.push(compare(
            "frank-wolfe",
            out.value,
            fw.value,
            fw.certified_gap,
            tol,
        ));
    }
    if uses_grid(cli) && grid_ok {
        let grid = clock.time("grid", || bloch_grid_reference(&inst, cli.resolution))?;
        let tol = delta + FW_SLACK + 3.0 * cli.resolution;
        report.oracle.push(compare(
            "bloch-grid",
            out.value,
            grid.value,
            grid.certified_gap,
            tol,
        ));
    }
    finish_verify(report);
    Ok(())
}

fn verify_qmam(
    cli: &Cli,
    q: &QmamInstance,
    report: &mut RunReport,
    clock: &mut Clock,
) -> Result<()> {
    if cli.oracle == Some(OracleChoice::Grid) {
        bail!("qmam instances are verified with --oracle fw");
    }
    let guess = cli.guess.unwrap_or(DEFAULT_GUESS);
    let delta = cli.delta.unwrap_or(DEFAULT_DELTA);
    let out = clock.time("solve", || {
        solve_qmam_with(q, guess, delta, &solver_options(cli))
    })?;
    report.parameters = Some(Parameters::from(&out.schedule));
    report.rounds_executed = Some(out.rounds_executed);
    report.value("guess", guess);
    report.value("value", out.value);
    report.value("lower_bound", out.lower_bound);
    let fw = clock.time("frank_wolfe", || {
        frank_wolfe_qmam_reference(q, guess, cli.oracle_iterations)
    })?;
    let tol = delta + QMAM_FW_SLACK + fw.certified_gap;
    report.oracle.push(compare(
        "frank-wolfe",
        out.value,
        fw.value,
        fw.certified_gap,
        tol,
    ));
    finish_verify(report);
    Ok(())
}

/// The decision against the side of the promise midpoint on which the grid
/// game value falls.
fn verify_qrg2(
    cli: &Cli,
    q: &Qrg2Instance,
    report: &mut RunReport,
    clock: &mut Clock,
) -> Result<()> {
    if cli.oracle == Some(OracleChoice::Fw) {
        bail!("qrg2 instances are verified with --oracle grid");
    }
    let out = clock.time("decide", || decide_qrg2_with(q, &qrg2_options(cli)))?;
    report.parameters = Some(Parameters::from(&out.schedule));
    report.rounds_executed = Some(out.rounds_executed);
    report.value("mu_bar", out.mu_bar);
    let value = clock.time("grid", || game_value_oracle(q, cli.resolution))?;
    let midpoint = q.promise.midpoint();
    report.value("game_value", value);
    report.oracle.push(OracleComparison {
        method: "bloch-grid-sign".into(),
        solver_value: if out.decision { 1.0 } else { 0.0 },
        oracle_value: value,
        oracle_gap: 0.0,
        difference: None,
        tolerance: None,
        agrees: out.decision == (value >= midpoint),
    });
    finish_verify(report);
    Ok(())
}
