use approx::assert_abs_diff_eq;
use eqsdp::generate::{gen_qip2, gen_qmam, gen_qrg2};
use eqsdp::io::*;
use eqsdp::Error;
use proptest::prelude::*;

fn generated(kind: u8, seed: u64, a: usize, b: usize) -> InstanceFile {
    match kind % 3 {
        0 => InstanceFile::from_qip2(&gen_qip2(a, b, seed).unwrap(), Some(seed)),
        1 => InstanceFile::from_qmam(&gen_qmam(a, b, seed).unwrap(), Some(seed)),
        _ => InstanceFile::from_qrg2(&gen_qrg2([a, b, b, a], seed).unwrap(), Some(seed)),
    }
}

fn format_path(text: &str) -> String {
    match InstanceFile::parse(text) {
        Err(Error::Format { path, .. }) => path,
        other => panic!("expected a format error, got {other:?}"),
    }
}

fn qip2_text() -> String {
    generated(0, 1, 2, 2).to_canonical_string()
}

#[test]
fn same_seed_gives_identical_files() {
    for kind in 0..3 {
        assert_eq!(
            generated(kind, 9, 2, 2).to_canonical_string(),
            generated(kind, 9, 2, 2).to_canonical_string()
        );
        assert_ne!(
            generated(kind, 9, 2, 2).digest(),
            generated(kind, 10, 2, 2).digest()
        );
    }
}

#[test]
fn generated_states_are_pure_and_normalized() {
    for seed in 0..20 {
        let q = gen_qip2(2, 3, seed).unwrap();
        let rho = q.initial.density();
        assert_abs_diff_eq!(rho.op().trace(), 1.0, epsilon = 1e-12);
        let values = rho.op().eigenvalues();
        assert_abs_diff_eq!(values[0], 1.0, epsilon = 1e-12);
        assert!(values[1..].iter().all(|l| l.abs() < 1e-12));
    }
}

#[test]
fn generated_measurements_lie_in_unit_interval() {
    for seed in 0..20 {
        for r in [
            gen_qip2(2, 2, seed).unwrap().measurement,
            gen_qmam(2, 3, seed).unwrap().measurement,
            gen_qrg2([2, 1, 2, 2], seed).unwrap().measurement,
        ] {
            let values = r.eigenvalues();
            assert!(values[0] <= 1.0 + 1e-12 && *values.last().unwrap() >= -1e-12);
        }
    }
}

#[test]
fn canonical_float_format() {
    assert_eq!(canonical_float(0.5), "5.0000000000000000e-1");
    assert_eq!(canonical_float(-0.125), "-1.2500000000000000e-1");
    assert_eq!(canonical_float(0.0), "0.0000000000000000e0");
    let x = 0.1 + 0.2;
    assert_eq!(canonical_float(x).parse::<f64>().unwrap(), x);
}

#[test]
fn round_trip_through_instances() {
    for kind in 0..3 {
        let file = generated(kind, 3, 2, 2);
        let instance = file.to_instance().unwrap();
        assert_eq!(instance.kind() as u8, file.kind as u8);
        let back = InstanceFile::from_instance(&instance, file.seed);
        assert_eq!(back.to_canonical_string(), file.to_canonical_string());
    }
}

#[test]
fn files_on_disk() {
    let dir = std::env::temp_dir().join(format!("eqsdp-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("instance.json");
    let file = generated(2, 4, 1, 2);
    write_instance_file(&path, &file).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(digest_hex(text.as_bytes()), file.digest());
    assert_eq!(read_instance_file(&path).unwrap(), file);
    assert!(matches!(
        read_instance_file(&dir.join("missing.json")),
        Err(Error::Io(_))
    ));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_files_name_the_field() {
    let text = qip2_text();
    assert_eq!(format_path(&text.replace("\"qip2\"", "\"qip3\"")), "kind");
    assert_eq!(
        format_path(&text.replace(FORMAT_VERSION, "eqsdp-instance/0")),
        "version"
    );
    assert_eq!(
        format_path(&text.replacen("\"dims\":[2,2]", "\"dims\":[2,0]", 1)),
        "dims[1]"
    );
    assert_eq!(
        format_path(&text.replacen("\"dims\":[2,2]", "\"dims\":[2,2,2]", 1)),
        "dims"
    );
    assert_eq!(
        format_path(&text.replacen("\"dims\":[2,2]", "\"dims\":[2,2],\"extra\":1", 1)),
        "extra"
    );
    let missing = text
        .replacen(",\"seed\":1", "", 1)
        .replacen("\"version\"", "\"versio\"", 1);
    assert!(matches!(
        InstanceFile::parse(&missing),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        InstanceFile::parse("{"),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        InstanceFile::parse(&format!("{text} trailing")),
        Err(Error::Format { .. })
    ));
}

#[test]
fn type_errors_carry_nested_paths() {
    let text = qip2_text();
    let i = text.find("\"measurement\":[[[").unwrap() + "\"measurement\":[[[".len();
    let bad = format!(
        "{}\"x\"{}",
        &text[..i],
        &text[text[i..].find(',').unwrap() + i..]
    );
    assert_eq!(format_path(&bad), "measurement[0][0][0]");
}

#[test]
fn semantic_checks() {
    let good = generated(0, 5, 2, 2);
    let mut f = good.clone();
    f.measurement[0][1] = [0.3, 0.0];
    f.measurement[1][0] = [-0.3, 0.0];
    assert!(
        matches!(f.to_instance(), Err(Error::Format { ref path, .. }) if path == "measurement")
    );

    let mut f = good.clone();
    for (i, row) in f.measurement.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = if i == j { [2.0, 0.0] } else { [0.0, 0.0] };
        }
    }
    assert!(
        matches!(f.to_instance(), Err(Error::Format { ref path, .. }) if path == "measurement")
    );

    let mut f = good.clone();
    f.states[0].pop();
    assert!(matches!(f.validate(), Err(Error::Format { ref path, .. }) if path == "states[0]"));

    let mut f = good.clone();
    f.measurement[2].push([0.0, 0.0]);
    assert!(
        matches!(f.validate(), Err(Error::Format { ref path, .. }) if path == "measurement[2]")
    );

    let mut f = good.clone();
    f.promise = Some([0.2, 0.8]);
    assert!(matches!(f.validate(), Err(Error::Format { ref path, .. }) if path == "promise"));

    let mut f = generated(1, 5, 2, 2);
    f.promise = None;
    assert!(matches!(f.validate(), Err(Error::Format { ref path, .. }) if path == "promise"));

    let mut f = good;
    f.measurement[0][0] = [f64::NAN, 0.0];
    assert!(f.validate().is_err());
}

#[test]
fn zero_state_is_rejected() {
    let mut f = generated(0, 6, 2, 2);
    for a in f.states[0].iter_mut() {
        *a = [0.0, 0.0];
    }
    assert!(matches!(f.to_instance(), Err(Error::Format { ref path, .. }) if path == "states[0]"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn canonical_text_is_a_fixed_point(kind in 0u8..3, seed in any::<u64>(), a in 1usize..4, b in 1usize..3) {
        let file = generated(kind, seed, a, b);
        let text = file.to_canonical_string();
        let parsed = InstanceFile::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &file);
        prop_assert_eq!(parsed.to_canonical_string(), text);
    }
}
