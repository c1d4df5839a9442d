use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use eqsdp::generate::{affine_measurement, gen_qrg2, planting_map};
use eqsdp::io::{InstanceFile, InstanceKind};
use eqsdp::qrg2::{game_value_oracle, Qrg2Instance};
use serde_json::Value;

fn eqsdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqsdp"))
        .args(args)
        .output()
        .unwrap()
}

fn eqsdp_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_eqsdp"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("eqsdp-cli-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn path(&self, file: &str) -> String {
        self.0.join(file).to_str().unwrap().to_string()
    }

    fn gen(&self, file: &str, args: &[&str]) -> String {
        let path = self.path(file);
        let mut full = vec!["gen", "--output", &path];
        full.extend_from_slice(args);
        assert!(eqsdp(&full).status.success());
        path
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn read(path: &str) -> InstanceFile {
    InstanceFile::parse(&std::fs::read_to_string(Path::new(path)).unwrap()).unwrap()
}

fn write(path: &str, file: &InstanceFile) {
    std::fs::write(path, file.to_canonical_string()).unwrap();
}

#[test]
fn gen_then_solve_reports_the_schedule() {
    let dir = Scratch::new("schedule");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "7"]);
    let report = json(&eqsdp(&[
        "solve", "--input", &input, "--guess", "0.5", "--delta", "0.05",
    ]));
    let p = &report["parameters"];
    assert_eq!(p["delta"], 0.05);
    assert_eq!(p["width"], 3.0);
    assert_eq!(p["dimension"], 4);
    // 144 ln 4 / 0.0025 = 79850.55...
    assert_eq!(p["rounds"], 79_851);
    assert_eq!(p["epsilon"].as_f64().unwrap(), 0.05 / 12.0);
    assert_eq!(report["command"], "solve");
    assert_eq!(report["instance"]["digest"], read(&input).digest());
    assert!(report["timings"]["wall_millis"].as_f64().unwrap() >= 0.0);
}

#[test]
fn accepting_everything_is_feasible() {
    let dir = Scratch::new("identity");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "1"]);
    let mut file = read(&input);
    for (i, row) in file.measurement.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = [if i == j { 1.0 } else { 0.0 }, 0.0];
        }
    }
    write(&input, &file);
    let report = json(&eqsdp(&["solve", "--input", &input, "--guess", "1"]));
    assert_eq!(report["verdict"], "FeasibleWithWitness");
    assert!(report["values"]["witness_marginal_error"].as_f64().unwrap() <= 1e-7);
    assert!((report["values"]["witness_objective"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn promise_instance_solves_without_guess() {
    let dir = Scratch::new("promise");
    let input = dir.gen(
        "i.json",
        &["--dims", "2,2", "--seed", "2", "--promise", "0.9,0.5"],
    );
    assert_eq!(read(&input).promise, Some([0.9, 0.5]));
    let report = json(&eqsdp(&["solve", "--input", &input]));
    assert_eq!(report["values"]["guess"], 0.7);
    assert!((report["parameters"]["delta"].as_f64().unwrap() - 0.16 / 18.0).abs() < 1e-15);
    let out = eqsdp(&["solve", "--input", &dir.gen("j.json", &["--dims", "2,2"])]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = Scratch::new("cap");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "3"]);
    let out = eqsdp(&[
        "solve",
        "--input",
        &input,
        "--guess",
        "0.5",
        "--iterations-cap",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precision not reached"));
    assert!(out.stdout.is_empty());
}

#[test]
fn input_errors_exit_with_one() {
    let dir = Scratch::new("errors");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "4"]);
    let text = std::fs::read_to_string(&input).unwrap();
    let bad = dir.path("bad.json");
    std::fs::write(&bad, text.replacen("\"dims\":[2,2]", "\"dims\":[2,0]", 1)).unwrap();
    let out = eqsdp(&["solve", "--input", &bad, "--guess", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims[1]"));

    std::fs::write(&bad, "{\n  \"version\": 3\n}").unwrap();
    let out = eqsdp(&["solve", "--input", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    for args in [
        vec!["solve", "--input", &dir.path("missing.json")],
        vec!["qmam", "--input", &input],
        vec!["solve", "--input", &input, "--guess", "0.5", "--delta", "0"],
        vec!["solve", "--bogus"],
        vec!["gen", "--dims", "2"],
        vec!["gen", "--dims", "2,2", "--promise", "0.9"],
        vec!["verify", "--input", &input, "--oracle", "grid"],
    ] {
        assert_eq!(eqsdp(&args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(eqsdp(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_is_reproducible_and_canonical() {
    let dir = Scratch::new("gen");
    for (kind, dims) in [("qip2", "2,3"), ("qmam", "2,2"), ("qrg2", "1,2,1,2")] {
        let a = eqsdp(&["gen", "--kind", kind, "--dims", dims, "--seed", "11"]);
        let b = eqsdp(&["gen", "--kind", kind, "--dims", dims, "--seed", "11"]);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
        let path = dir.gen(
            &format!("{kind}.json"),
            &["--kind", kind, "--dims", dims, "--seed", "11"],
        );
        assert_eq!(std::fs::read(&path).unwrap(), a.stdout);
        let file = read(&path);
        assert_eq!(file.to_canonical_string().as_bytes(), a.stdout.as_slice());
        assert_eq!(file.seed, Some(11));
    }
    assert_eq!(read(&dir.path("qrg2.json")).kind, InstanceKind::Qrg2);
}

#[test]
fn stdin_and_file_inputs_agree() {
    let dir = Scratch::new("stdin");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "5"]);
    let args = ["solve", "--guess", "0.4", "--deterministic"];
    let from_stdin = eqsdp_stdin(&args, &std::fs::read(&input).unwrap());
    let mut with_file = args.to_vec();
    with_file.extend(["--input", input.as_str()]);
    let from_file = eqsdp(&with_file);
    assert!(from_stdin.status.success());
    assert_eq!(from_stdin.stdout, from_file.stdout);
}

#[test]
fn deterministic_reports_are_byte_identical() {
    let dir = Scratch::new("determinism");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "6"]);
    let args = [
        "solve",
        "--input",
        input.as_str(),
        "--guess",
        "0.5",
        "--deterministic",
    ];
    let first = eqsdp(&args);
    for _ in 0..3 {
        assert_eq!(eqsdp(&args).stdout, first.stdout);
    }
    assert!(json(&first).get("timings").is_none());
    let explicit = eqsdp(&[
        "solve",
        "--input",
        input.as_str(),
        "--guess",
        "0.5",
        "--deterministic",
        "true",
    ]);
    assert_eq!(explicit.stdout, first.stdout);
    let timed = json(&eqsdp(&[
        "solve",
        "--input",
        input.as_str(),
        "--guess",
        "0.5",
        "--deterministic",
        "false",
    ]));
    assert!(timed["timings"]["phases"][0]["name"] == "solve");
}

#[test]
fn report_written_to_output_path() {
    let dir = Scratch::new("output");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "7"]);
    let report = dir.path("report.json");
    let out = eqsdp(&[
        "solve",
        "--input",
        &input,
        "--guess",
        "0.5",
        "--output",
        &report,
        "--deterministic",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let direct = eqsdp(&[
        "solve",
        "--input",
        &input,
        "--guess",
        "0.5",
        "--deterministic",
    ]);
    assert_eq!(std::fs::read(&report).unwrap(), direct.stdout);
}

#[test]
fn text_report_is_aligned() {
    let dir = Scratch::new("text");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "8"]);
    let out = eqsdp(&[
        "solve",
        "--input",
        &input,
        "--guess",
        "0.5",
        "--report",
        "text",
        "--deterministic",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0].split_whitespace().collect::<Vec<_>>(),
        ["command", "solve"]
    );
    let column = |line: &str| {
        line.find("  ")
            .map(|i| i + line[i..].len() - line[i..].trim_start().len())
    };
    let first = column(lines[0]).unwrap();
    assert!(lines.iter().all(|l| column(l) == Some(first)), "{text}");
    assert!(text.contains("rounds") && text.contains("79851"));
    assert!(lines.last().unwrap().starts_with("verdict"));
}

#[test]
fn optimum_reports_six_probes() {
    let dir = Scratch::new("optimum");
    let input = dir.gen("i.json", &["--dims", "2,2", "--seed", "9"]);
    let report = json(&eqsdp(&["optimum", "--input", &input]));
    let probes = report["probes"].as_array().unwrap();
    assert_eq!(probes.iter().filter(|p| p["phase"] == "search").count(), 6);
    let v = &report["values"];
    let (lo, hi, alpha) = (
        v["lower"].as_f64().unwrap(),
        v["upper"].as_f64().unwrap(),
        v["alpha_estimate"].as_f64().unwrap(),
    );
    assert!(lo <= alpha && alpha <= hi && hi - lo <= 0.02);
    assert!(v["witness_marginal_error"].as_f64().unwrap() <= 1e-7);
    assert_eq!(report["verdict"], "Optimum");
}

#[test]
fn verify_on_qubit_fixtures() {
    let dir = Scratch::new("verify");
    for dims in ["1,2", "2,1"] {
        for seed in ["1", "2"] {
            let input = dir.gen("i.json", &["--dims", dims, "--seed", seed]);
            let report = json(&eqsdp(&[
                "verify", "--input", &input, "--oracle", "both", "--guess", "0.6",
            ]));
            let oracle = report["oracle"].as_array().unwrap();
            assert_eq!(oracle.len(), 2, "dims {dims}");
            for o in oracle {
                assert!(
                    o["difference"].as_f64().unwrap() <= o["tolerance"].as_f64().unwrap(),
                    "{o}"
                );
            }
            assert_eq!(report["verdict"], "Agree");
        }
    }
}

#[test]
fn verify_other_kinds() {
    let dir = Scratch::new("verify-kinds");
    let qmam = dir.gen(
        "qmam.json",
        &["--kind", "qmam", "--dims", "2,1", "--seed", "3"],
    );
    assert_eq!(
        json(&eqsdp(&["verify", "--input", &qmam]))["verdict"],
        "Agree"
    );
    let qip2 = dir.gen("qip2.json", &["--dims", "2,2", "--seed", "3"]);
    let report = json(&eqsdp(&["verify", "--input", &qip2, "--oracle", "both"]));
    assert_eq!(report["oracle"].as_array().unwrap().len(), 1);
    let qrg2 = dir.gen(
        "qrg2.json",
        &["--kind", "qrg2", "--dims", "1,2,1,2", "--seed", "3"],
    );
    let report = json(&eqsdp(&["verify", "--input", &qrg2]));
    assert_eq!(report["oracle"][0]["method"], "bloch-grid-sign");
    assert_eq!(
        eqsdp(&["verify", "--input", &qrg2, "--oracle", "fw"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn qmam_and_qrg2_commands() {
    let dir = Scratch::new("families");
    let qmam = dir.gen(
        "qmam.json",
        &["--kind", "qmam", "--dims", "2,2", "--seed", "4"],
    );
    let report = json(&eqsdp(&["qmam", "--input", &qmam]));
    assert!(["Accept", "Reject"].contains(&report["verdict"].as_str().unwrap()));
    assert_eq!(report["parameters"]["width"], 3.0);
    assert_eq!(report["parameters"]["dimension"], 8);
    let report = json(&eqsdp(&[
        "qmam", "--input", &qmam, "--guess", "0.0", "--delta", "0.1",
    ]));
    assert_eq!(report["values"]["guess"], 0.0);

    let qrg2 = dir.path("qrg2.json");
    write(&qrg2, &InstanceFile::from_qrg2(&planted_game(4), None));
    let auto = json(&eqsdp(&["qrg2", "--input", &qrg2]));
    let nested = json(&eqsdp(&["qrg2", "--input", &qrg2, "--inner", "nested"]));
    assert_eq!(auto["parameters"], nested["parameters"]);
    assert_eq!(auto["verdict"], "Accept");
    assert_eq!(nested["verdict"], "Accept");
    let v = &auto["values"];
    assert!(v["lower_bound"].as_f64().unwrap() <= v["mu_bar"].as_f64().unwrap());
    assert!(v["mu_bar"].as_f64().unwrap() <= v["upper_bound"].as_f64().unwrap());
}

/// A game whose value sits well above the promise band.
fn planted_game(seed: u64) -> Qrg2Instance {
    let inst = gen_qrg2([1, 2, 1, 2], seed).unwrap();
    let value = game_value_oracle(&inst, 0.02).unwrap();
    let (scale, offset) =
        planting_map((value - 0.04).max(0.0), (value + 0.04).min(1.0), 0.93, true).unwrap();
    let r = affine_measurement(&inst.measurement, scale, offset).unwrap();
    Qrg2Instance::new(inst.dims, inst.yes_state, inst.no_state, r, inst.promise).unwrap()
}
