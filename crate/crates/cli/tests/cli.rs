use std::path::PathBuf;
use std::process::{Command, Output};

use gk_core::report::Report;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gk-workbench")).args(args).output().expect("run cli")
}

fn check(name: &str, extra: &[&str]) -> Output {
    let path = scenario(name);
    let mut args = vec!["check", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn temp_file(label: &str, body: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("gk-workbench-{label}-{}.toml", std::process::id()));
    std::fs::write(&p, body).expect("write scenario");
    p
}

#[test]
fn passing_scenario_exits_zero() {
    let out = check("flat_classical.toml", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("# flat C2, classical KK data"));
    assert!(text.contains("overall: PASS"));
}

#[test]
fn failing_scenario_exits_one() {
    let out = check("broken_lambda.toml", &[]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("k12.") && l.contains("Eq (k12)") && l.contains("FAIL")));
}

#[test]
fn scenario_errors_exit_two_with_location() {
    let p = temp_file("unknown", "[structure]\nkind = \"flat-kahler\"\nshape = 1\n[twist]\nbuilder = \"classical\"\n");
    let out = run(&["check", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown key `structure.shape` at 3:1"), "{err}");

    let out = run(&["check", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = check("flat_classical.toml", &["--samples", "4by2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = check("flat_classical.toml", &["--format", "yaml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn machine_report_round_trips() {
    let out = check("hyperkahler_interpolation.toml", &["--format", "machine"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).expect("valid document");
    assert_eq!(doc["verdict"], "pass");
    let recs = doc["records"].as_array().unwrap();
    assert!(!recs.is_empty());
    for r in recs {
        for key in ["check_id", "anchor", "residual", "point", "pass"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
    }
    let rep = Report::from_machine(&text).unwrap();
    assert_eq!(rep.to_machine().trim_end(), text.trim_end());
}

#[test]
fn machine_report_is_byte_identical_across_runs() {
    let a = check("exponential_corollary1.toml", &["--format", "machine", "--seed", "7"]);
    let b = check("exponential_corollary1.toml", &["--format", "machine", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let c = check("exponential_corollary1.toml", &["--format", "machine", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn overrides_change_the_run() {
    let out = check("cp2_corollary2.toml", &["--samples", "2x1", "--end-to-end", "off", "--strict-invariance", "off"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("herm-twist."));
    assert!(!text.contains("invariance."));
    assert!(text.contains("1 points"));

    // a tolerance far below rounding error makes checks fail
    let out = check("cp2_corollary2.toml", &["--tol-abs", "1e-30", "--tol-rel", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn list_builtins_names_potentials_and_pipelines() {
    let out = run(&["list-builtins"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["cn_flat", "cp2_fubini_study", "hirzebruch", "exponential", "sixdim_simplex", "corollary-2", "j3"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn every_shipped_scenario_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let s = gk_core::scenario::parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(gk_core::scenario::parse_scenario(&s.to_toml()).unwrap(), s);
        n += 1;
    }
    assert!(n >= 9);
}
