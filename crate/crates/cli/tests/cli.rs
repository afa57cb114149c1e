use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-pulse"))
        .args(args)
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap()
}

const SMALL: [&str; 8] = ["--frame-len", "8", "--nt", "8", "--min-lg", "256", "--region", "1,4"];

fn small(verb: &str, extra: &[&str]) -> Vec<String> {
    let mut v = vec![verb.to_string()];
    v.extend(SMALL.iter().map(|s| s.to_string()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_small(dir: &Path, verb: &str, extra: &[&str]) -> Output {
    let args = small(verb, extra);
    run(dir, &args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn design_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "design", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = ["spectrum.csv", "pulse.csv", "result.json"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    let out = run_small(dir.path(), "design", &[]);
    assert!(out.status.success());
    for (f, before) in files.iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), before, "{f}");
    }
    let spectrum = String::from_utf8(first[0].clone()).unwrap();
    assert!(spectrum.starts_with("# config="));
    assert!(spectrum.contains("# seed_schedule="));
}

#[test]
fn zero_rolloff_reports_degenerate_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "design", &["--beta", "0"]);
    assert!(out.status.success());
    let json = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
    assert!(json.contains("\"degenerate\": true"), "{json}");
}

#[test]
fn sweeps_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    for (verb, file) in [("fig2", "sidelobe_vs_bitrate.csv"), ("fig3", "islr_vs_bitrate.csv")] {
        let out = run_small(dir.path(), verb, &["--beta", "0,0.5,1"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 4, "{text}");
    }
}

#[test]
fn fig1_writes_four_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "fig1", &["--frames", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sacf_curves.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "lag,theory_rrc_db,mc_rrc_db,theory_opt_db,mc_opt_db");
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "validate", &["--beta", "0.25,0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("validation.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_small(dir.path(), "fig2", &["--beta", ""]).status.code(), Some(2));
    assert_eq!(run_small(dir.path(), "design", &["--constellation", "qam8"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["bogus"]).status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "beta = []\n").unwrap();
    assert_eq!(run(dir.path(), &["fig3", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "beta = 0.5\nframe_len = 8\nnt = 8\nmin_lg = 256\nregion = [1, 4]\n").unwrap();
    let out = run(dir.path(), &["design", "--config", cfg.to_str().unwrap(), "--beta", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
    assert!(json.contains("\"beta\": 0.25"), "{json}");
}
