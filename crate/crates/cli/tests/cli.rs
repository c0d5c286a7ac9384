use std::fs;
use std::path::Path;
use std::process::Command;

use homoglab::Config;
use serde_json::Value;

const DIRICHLET: &str = include_str!("../../../configs/laminate_dirichlet.cfg");

fn small_config() -> String {
    DIRICHLET
        .lines()
        .map(|line| match line.split('=').next().map(str::trim) {
            Some("n") => "n = 64".to_string(),
            Some("corrector_n") => "corrector_n = 32".to_string(),
            Some("epsilon") => "epsilon = 0.125 0.0625".to_string(),
            Some("t") => "t = 8 16".to_string(),
            Some("radii") => "radii = 1 2".to_string(),
            _ => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn homoglab(dir: &Path, config: &str, args: &[&str]) -> (i32, String) {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_homoglab"))
        .args(args)
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out.status.code().unwrap_or(-1), stderr)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn unknown_command_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = homoglab(dir.path(), &small_config(), &["homogenise"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("unknown command"));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = small_config().replace("source = 1", "source = 1 +");
    let (code, stderr) = homoglab(dir.path(), &broken, &["lipschitz"]);
    assert_eq!(code, 1, "{stderr}");
    let unknown = format!("{}\n[extra]\nkey = 1\n", small_config());
    assert_eq!(homoglab(dir.path(), &unknown, &["lipschitz"]).0, 1);
}

#[test]
fn solver_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let starved = format!("{}\n[solver]\ntol = 1e-12\nmax_iter = 2\n", small_config());
    let (code, stderr) = homoglab(dir.path(), &starved, &["lipschitz"]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn strict_mode_turns_failed_checks_into_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let demanding = format!("{}\n[check]\nprobe_ratio_max = 1e-6\n", small_config());
    assert_eq!(homoglab(dir.path(), &demanding, &["lipschitz"]).0, 0);
    let summary: Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["command"], "lipschitz");
    assert_eq!(summary["pass"]["ratio_uniform"], false);
    assert_eq!(homoglab(dir.path(), &demanding, &["lipschitz", "--strict"]).0, 3);
    assert_eq!(homoglab(dir.path(), &small_config(), &["lipschitz", "--strict"]).0, 0);
}

#[test]
fn outputs_carry_summary_stamp_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = homoglab(dir.path(), &small_config(), &["homogenize", "--seed", "5"]);
    assert_eq!(code, 0, "{stderr}");
    let stamp: Value = serde_json::from_str(&read(dir.path(), "stamp.json")).unwrap();
    assert_eq!(stamp["seed"], 5);
    assert!(stamp["threads"].as_u64().unwrap() >= 1);
    let summary: Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    let effective = read(dir.path(), "effective.csv");
    assert_eq!(effective.lines().next(), Some("method,T,i,j,alpha,beta,value"));
    assert!(effective.lines().count() > 1);
}

#[test]
fn lemma_fuzz_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["lemma-fuzz", "--count", "1000", "--seed", "7"];
    let (code, stderr) = homoglab(dir.path(), &small_config(), &args);
    assert_eq!(code, 0, "{stderr}");
    let csv = read(dir.path(), "lemma_fuzz.csv");
    let corpus = read(dir.path(), "lemma_corpus.json");
    homoglab(dir.path(), &small_config(), &args);
    assert_eq!(csv, read(dir.path(), "lemma_fuzz.csv"));
    assert_eq!(corpus, read(dir.path(), "lemma_corpus.json"));
}

#[test]
fn shipped_configs_round_trip() {
    for text in [
        DIRICHLET,
        include_str!("../../../configs/laminate_neumann.cfg"),
        include_str!("../../../configs/quasiperiodic_1d.cfg"),
    ] {
        let cfg = Config::parse(text).unwrap();
        let again = Config::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg.to_text(), again.to_text());
    }
}
