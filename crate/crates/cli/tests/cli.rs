use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use replayguard::fixtures::{standard_speech_fixture, STANDARD_FIXTURE_RATE_HZ};
use replayguard::{read_wav, simulate_msm_chain, write_wav, AudioBuffer, MsmChainConfig};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_replayguard"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn wav(dir: &Path, name: &str, x: Vec<f64>, rate: u32) -> PathBuf {
    let p = dir.join(name);
    write_wav(&p, &AudioBuffer::new(x, rate).unwrap()).unwrap();
    p
}

fn clean_and_replay(dir: &Path) -> (PathBuf, PathBuf) {
    let x = standard_speech_fixture(1);
    let y = simulate_msm_chain(&x, &MsmChainConfig::default(), 1).unwrap();
    (
        wav(dir, "clean.wav", x, STANDARD_FIXTURE_RATE_HZ),
        wav(dir, "replay.wav", y, STANDARD_FIXTURE_RATE_HZ),
    )
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn missing_input_is_reported_with_its_path() {
    let dir = TempDir::new().unwrap();
    let out = run(&["analyze", "no-such-file.wav"], dir.path());
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no-such-file.wav"), "{err}");
    assert!(entries(dir.path()).is_empty());
}

#[test]
fn analyze_writes_artifacts_and_honours_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (clean, replay) = clean_and_replay(dir.path());
    let out_dir = dir.path().join("out");
    std::fs::create_dir(&out_dir).unwrap();
    let o = out_dir.to_str().unwrap();
    let first = run(
        &["analyze", clean.to_str().unwrap(), "--out-dir", o],
        dir.path(),
    );
    assert_eq!(
        code(&first),
        0,
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert_eq!(
        entries(&out_dir),
        ["bicoherence.csv", "hinich.json", "report.json"]
    );
    let report = json(out_dir.join("report.json"));
    assert_eq!(report["verdict"], "genuine");
    let bytes = std::fs::read(out_dir.join("report.json")).unwrap();
    run(
        &["analyze", clean.to_str().unwrap(), "--out-dir", o],
        dir.path(),
    );
    assert_eq!(std::fs::read(out_dir.join("report.json")).unwrap(), bytes);

    let second = run(
        &["analyze", replay.to_str().unwrap(), "--out-dir", o],
        dir.path(),
    );
    assert_eq!(code(&second), 3);
    assert_eq!(json(out_dir.join("report.json"))["verdict"], "replay");
    assert_eq!(entries(&out_dir).len(), 3, "temporary files left behind");
}

#[test]
fn invalid_options_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let (clean, _) = clean_and_replay(dir.path());
    let c = clean.to_str().unwrap();
    for args in [
        vec!["analyze", c, "--overlap", "1.5"],
        vec!["analyze", c, "--threshold", "2"],
        vec!["analyze", c, "--smoothing", "0"],
        vec!["frobnicate"],
    ] {
        assert_eq!(code(&run(&args, dir.path())), 2, "{args:?}");
    }
}

#[test]
fn identity_chain_reproduces_the_input() {
    let dir = TempDir::new().unwrap();
    let (clean, _) = clean_and_replay(dir.path());
    let cfg = dir.path().join("identity.chain");
    std::fs::write(&cfg, MsmChainConfig::identity().to_text()).unwrap();
    let out = dir.path().join("same.wav");
    let o = run(
        &[
            "simulate",
            clean.to_str().unwrap(),
            out.to_str().unwrap(),
            "--chain-config",
            cfg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read_wav(&out).unwrap().samples(),
        read_wav(&clean).unwrap().samples()
    );
}

#[test]
fn simulate_orders_and_seeds() {
    let dir = TempDir::new().unwrap();
    let (clean, _) = clean_and_replay(dir.path());
    let c = clean.to_str().unwrap();
    let sim = |name: &str, extra: &[&str], env_seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = bin();
        cmd.current_dir(dir.path())
            .args(["simulate", c, out.to_str().unwrap()])
            .args(extra)
            .env_remove("HOSA_REPLAY_SEED");
        if let Some(s) = env_seed {
            cmd.env("HOSA_REPLAY_SEED", s);
        }
        let o = cmd.output().unwrap();
        (
            code(&o),
            String::from_utf8_lossy(&o.stdout).into_owned(),
            out,
        )
    };
    let (c1, log1, r1) = sim("r1.wav", &["--order", "1", "--seed", "7"], None);
    let (c2, _, r2) = sim("r2.wav", &["--order", "2", "--seed", "7"], None);
    let (c3, log3, r3) = sim("r3.wav", &["--order", "1"], Some("7"));
    assert_eq!((c1, c2, c3), (0, 0, 0));
    assert!(log1.starts_with("# seed = 7\n"), "{log1}");
    assert_eq!(log1, log3);
    assert_ne!(
        read_wav(&r1).unwrap().samples(),
        read_wav(&r2).unwrap().samples()
    );
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r3).unwrap());

    assert_eq!(sim("bad.wav", &["--order", "3"], None).0, 2);
    let bad = dir.path().join("bad.chain");
    std::fs::write(&bad, "speaker.volume = 11\n").unwrap();
    let (code_bad, _, out_bad) = sim("bad2.wav", &["--chain-config", bad.to_str().unwrap()], None);
    assert_eq!(code_bad, 2);
    assert!(!out_bad.exists());
}

#[test]
fn compare_reports_deltas() {
    let dir = TempDir::new().unwrap();
    let (clean, replay) = clean_and_replay(dir.path());
    let (c, r) = (clean.to_str().unwrap(), replay.to_str().unwrap());

    let same = run(&["compare", c, c], dir.path());
    assert_eq!(code(&same), 0);
    let v = json(dir.path().join("compare.json"));
    assert_eq!(v["delta_mean_bicoherence"], 0.0);
    assert_eq!(v["delta_failing_fraction"], 0.0);
    assert_eq!(v["qpc_shift"], 0.0);

    let diff = run(&["compare", c, r], dir.path());
    assert_eq!(code(&diff), 0);
    let v = json(dir.path().join("compare.json"));
    assert!(v["delta_mean_bicoherence"].as_f64().unwrap() > 0.0);
    assert!(v["delta_failing_fraction"].as_f64().unwrap() > 0.0);
    assert!(v["qpc_shift"].as_f64().unwrap() > 0.0);
    assert_eq!(v["verdict_a"], "genuine");
    assert_eq!(v["verdict_b"], "replay");

    let other_rate = wav(
        dir.path(),
        "fast.wav",
        standard_speech_fixture(1),
        2 * STANDARD_FIXTURE_RATE_HZ,
    );
    let mixed = run(&["compare", c, other_rate.to_str().unwrap()], dir.path());
    assert_eq!(code(&mixed), 0);
    let v = json(dir.path().join("compare.json"));
    let warnings = v["warnings"].as_array().unwrap();
    assert!(!warnings.is_empty());
    assert!(String::from_utf8_lossy(&mixed.stderr).contains("warning"));
}

#[test]
fn scatter_writes_csv() {
    let dir = TempDir::new().unwrap();
    let (_, replay) = clean_and_replay(dir.path());
    let o = run(
        &["scatter", replay.to_str().unwrap(), "--label", "RA-1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame,f1,f2,magnitude"));
    assert!(lines.next().is_some());
}

#[test]
fn selftest_passes_and_catches_an_injected_fault() {
    let dir = TempDir::new().unwrap();
    let list = run(&["selftest", "--list"], dir.path());
    assert_eq!(code(&list), 0);
    assert!(String::from_utf8_lossy(&list.stdout).contains("bicoherence.bound"));

    let ok = run(&["selftest"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));

    let bad = run(
        &["selftest", "--inject-fault", "inflate-bicoherence"],
        dir.path(),
    );
    assert_eq!(code(&bad), 3);
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("FAIL bicoherence.bound"), "{text}");
}
