use std::fs;
use std::path::Path;
use std::process::Command;

use gravvortex_cli::config::{Continuation, Params, SolveMode, SurfaceKindSpec, SurfaceSpec};
use gravvortex_cli::RunConfig;
use proptest::prelude::*;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (i32, String) {
    let path = dir.join(format!("{sub}.toml"));
    fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gravvortex"))
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

const SPHERE: &str = "[surface]\nkind = \"sphere\"\nresolution = [32, 64]\n";
const ORIGIN_TWICE: &str = "[[divisor]]\npoint = [0.0, 0.0]\nmultiplicity = 2\n";
const ANTIPODAL: &str = "[[divisor]]\npoint = [0.0, 0.0]\nmultiplicity = 1\n[[divisor]]\npoint = \"inf\"\nmultiplicity = 1\n";

#[test]
fn classify_reports_unstable_limit_weight() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "classify", &format!("{SPHERE}{ORIGIN_TWICE}[params]\ntau = 6.0\nalpha = 1.0\n"), &[]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("class Unstable"));
    assert!(out.contains("hilbert_mumford_exponent 2"));
    // 2πi·1·(4 − 6)·(4 − 2)
    let expected = 2.0 * std::f64::consts::PI * -2.0 * 2.0;
    assert!(out.contains(&format!("{expected:+.12e}i")), "{out}");
    assert!(dir.path().join("out/manifest.toml").exists());
}

#[test]
fn classify_antipodal_pair_has_zero_weight() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "classify", &format!("{SPHERE}{ANTIPODAL}[params]\ntau = 6.0\nalpha = 1.0\n"), &[]);
    assert_eq!(code, 0);
    assert!(out.contains("class StrictlyPolystable") && out.contains("weight 0"), "{out}");
}

#[test]
fn classify_rejects_empty_divisor() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(dir.path(), "classify", &format!("{SPHERE}[params]\ntau = 6.0\n"), &[]);
    assert_eq!(code, 2);
}

#[test]
fn futaki_agrees_with_closed_form_and_refuses_the_torus() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[params]\ntau = 6.0\nalpha = 1.0\nfutaki_n = 1\nfutaki_l = 0\n";
    let (code, out) = run(dir.path(), "futaki", &format!("{SPHERE}{body}"), &[]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains(&format!("{:+.15e}i", 8.0 * std::f64::consts::PI)), "{out}");
    let torus = "[surface]\nkind = \"torus\"\nresolution = [16, 16]\n";
    let (code, _) = run(dir.path(), "futaki", &format!("{torus}{body}"), &[]);
    assert_eq!(code, 2);
}

#[test]
fn einstein_bogomolnyi_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let params = "[params]\ntau = 6.0\nmode = \"einstein-bogomolnyi\"\ntol = 1e-9\n";
    let (code, out) = run(dir.path(), "solve", &format!("{SPHERE}{ANTIPODAL}{params}"), &[]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("audit PASS"), "{out}");
    let audit = fs::read_to_string(dir.path().join("out/audit.txt")).unwrap();
    assert!(audit.lines().all(|l| l.ends_with("PASS")), "{audit}");

    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "solve", &format!("{SPHERE}{ORIGIN_TWICE}{params}"), &[]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("futaki_certificate class = Unstable"), "{out}");
    assert!(dir.path().join("out/failure.txt").exists());
}

const TORUS: &str = "[surface]\nkind = \"torus\"\nresolution = [16, 16]\nmodulus = [0.0, 1.0]\n[[divisor]]\npoint = [0.5, 0.5]\nmultiplicity = 1\n";

#[test]
fn continuity_solve_then_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{TORUS}[params]\ntau = 6.0\nalpha = 0.05\nmode = \"continuity\"\ntol = 1e-9\n");
    let (code, out) = run(dir.path(), "solve", &config, &[]);
    assert_eq!(code, 0, "{out}");
    let log = fs::read_to_string(dir.path().join("out/path.log")).unwrap();
    assert!(log.lines().count() > 2);
    let first = fs::read(dir.path().join("out/f.txt")).unwrap();

    let audit = format!("input = {:?}\n{config}", dir.path().join("out"));
    let audit_dir = tempfile::tempdir().unwrap();
    let (code, out) = run(audit_dir.path(), "audit", &audit, &["--seed", "3"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("audit PASS"));

    let again = tempfile::tempdir().unwrap();
    let (code, _) = run(again.path(), "solve", &config, &[]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(again.path().join("out/f.txt")).unwrap(), first);
}

#[test]
fn inadmissible_tau_exits_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "solve", &format!("{TORUS}[params]\ntau = 2.0\n"), &[]);
    assert_eq!(code, 2);
    assert!(out.contains("tau/2"));
    assert!(!dir.path().join("out/path.log").exists());
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let mut tables = Vec::new();
    for jobs in [1, 2] {
        let dir = tempfile::tempdir().unwrap();
        let config = format!("{TORUS}[params]\ntau = 6.0\nmode = \"continuity\"\n[sweep]\nalphas = [0.0, 0.01, 0.02]\njobs = {jobs}\n");
        let (code, out) = run(dir.path(), "sweep", &config, &[]);
        assert_eq!(code, 0, "{out}");
        assert!(dir.path().join("out/run_002/path.log").exists());
        tables.push(fs::read_to_string(dir.path().join("out/sweep.txt")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, 1e-12..1e-3f64]
}

prop_compose! {
    fn configs()(
        sphere in any::<bool>(),
        n1 in 8usize..256,
        n2 in 8usize..256,
        re in finite(),
        im in 1e-3..10.0f64,
        tau in 1e-3..100.0f64,
        alpha in 0.0..10.0f64,
        tol in 1e-14..1e-2f64,
        max_iter in 1usize..10_000,
        seed in 0..=i64::MAX as u64,
        step in proptest::option::of(1e-6..1.0f64),
        points in proptest::collection::vec((finite(), finite(), 1u32..5), 0..4),
    ) -> RunConfig {
        let text = format!("[surface]\nkind = \"torus\"\nresolution = [1, 1]\n[params]\ntau = 1.0\n");
        let mut c = RunConfig::parse(&text).unwrap();
        c.seed = seed;
        c.surface = SurfaceSpec {
            kind: if sphere { SurfaceKindSpec::Sphere } else { SurfaceKindSpec::Torus },
            resolution: [n1, n2],
            modulus: if sphere { None } else { Some([re, im]) },
        };
        c.divisor = points
            .into_iter()
            .map(|(a, b, m)| serde_json::from_value(serde_json::json!({"point": [a, b], "multiplicity": m})).unwrap())
            .collect();
        c.params = Params { tau, alpha, tol, max_iter, mode: SolveMode::Continuity, futaki_n: None, futaki_l: None };
        c.continuation = Continuation { initial_step: step, ..Default::default() };
        c
    }
}

proptest! {
    #[test]
    fn config_round_trips(c in configs()) {
        prop_assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
