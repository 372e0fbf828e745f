use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfobserver::modfun::ModulatingFunction;
use mfobserver::transform::activation_time_bisection;

fn mfobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfobs"))
        .args(args)
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{summary}"))
        .to_string()
}

#[test]
fn tanks_config_reports_activation_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("tanks.cfg");
    let o = mfobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let t_a: f64 = value(&stdout(&o), "activation_time").parse().unwrap();
    assert!((t_a - 0.38013).abs() <= 1e-4);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,z1,z2,xi1,xi2,xihat1,xihat2,zhat1,zhat2,y,u,err_z,err_xi"
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("summary.txt")).unwrap(),
        stdout(&o)
    );
}

#[test]
fn out_of_range_eps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("chain.cfg")).unwrap();
    let text = text.replace("eps = 0.01", "eps = 1.5");
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text).unwrap();
    let o = mfobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(
        err.contains("bad.cfg:") && err.contains("eps = 1.5"),
        "{err}"
    );

    let good = configs().join("chain.cfg");
    let o = mfobs(&[
        "simulate",
        "--config",
        good.to_str().unwrap(),
        "--eps",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_key_points_at_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.cfg");
    fs::write(&cfg, "[plant]\nkind = chain\n").unwrap();
    let o = mfobs(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("gain"));
}

#[test]
fn chain_error_stays_below_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("chain.cfg");
    let o = mfobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = stdout(&o);
    let kappa: f64 = value(&s, "kappa").parse().unwrap();
    let sup: f64 = value(&s, "sup_error").parse().unwrap();
    assert!(sup <= kappa, "{sup} > {kappa}");
}

#[test]
fn required_certificate_exits_4_when_margin_is_negative() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("chain.cfg")).unwrap();
    let text = text.replace("q = scaled 0.01", "q = identity");
    assert!(text.contains("require = true"));
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, text).unwrap();
    let o = mfobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn activation_time_command() {
    let o = mfobs(&[
        "activation-time",
        "--n",
        "2",
        "--m",
        "2",
        "--eps",
        "0.01",
        "--t0",
        "0",
    ]);
    let t: f64 = stdout(&o).trim().parse().unwrap();
    assert!((t - 0.380132).abs() <= 1e-4);

    let o = mfobs(&["activation-time", "--n", "2", "--eps", "1e-12"]);
    let t: f64 = stdout(&o).trim().parse().unwrap();
    assert!(t > 0.0 && t < 1e-2, "{t}");

    let o = mfobs(&["activation-time", "--n", "3", "--m", "3", "--eps", "0.01"]);
    let t: f64 = stdout(&o).trim().parse().unwrap();
    let mf = ModulatingFunction::exponential(3, 0.0).unwrap();
    let oracle = activation_time_bisection(3, &mf, 0.01).unwrap();
    assert!((t - oracle).abs() <= 1e-9, "{t} vs {oracle}");

    let o = mfobs(&["activation-time", "--n", "2", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

fn eigenvalues(out: &Output) -> Vec<f64> {
    let mut v: Vec<f64> = value(&stdout(out), "eigenvalues")
        .split(", ")
        .map(|e| e.parse().unwrap())
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn check_gain_command() {
    let o = mfobs(&[
        "check-gain",
        "--n",
        "2",
        "--gain",
        "30,200",
        "--q",
        "identity",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let e = eigenvalues(&o);
    assert!(
        (e[0] + 20.0).abs() < 1e-9 && (e[1] + 10.0).abs() < 1e-9,
        "{e:?}"
    );

    let o = mfobs(&["check-gain", "--gain", "0,0"]);
    assert_ne!(o.status.code(), Some(0));

    let o = mfobs(&["check-gain", "--gain", "3,2"]);
    let e = eigenvalues(&o);
    assert!(
        (e[0] + 2.0).abs() < 1e-9 && (e[1] + 1.0).abs() < 1e-9,
        "{e:?}"
    );

    let o = mfobs(&["check-gain", "--n", "3", "--gain", "3,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_mf_flags_inflection_point() {
    let o = mfobs(&[
        "validate-mf",
        "--m",
        "2",
        "--times",
        "0.5,0.6931471805599453,2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("nonvanishing = false"));
    assert!(s.contains("zero: mu2(0.6931471805599453)"));
    assert!(s.contains("usable = true"));

    let o = mfobs(&["validate-mf", "--m", "3", "--grid", "0:5:51"]);
    assert!(stdout(&o).contains("nonvanishing = true"), "{}", stdout(&o));
}

#[test]
fn commands_are_bit_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("tanks.cfg");
    for d in [&a, &b] {
        let o = mfobs(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "summary.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let g1 = mfobs(&["check-gain", "--gain", "9,26,24", "--q", "scaled 0.001"]);
    let g2 = mfobs(&["check-gain", "--gain", "9,26,24", "--q", "scaled 0.001"]);
    assert_eq!(g1.stdout, g2.stdout);
}

#[test]
fn batch_matches_single_runs() {
    let base = tempfile::tempdir().unwrap();
    let single = tempfile::tempdir().unwrap();
    let names = ["chain.cfg", "chain3.cfg", "tanks.cfg"];
    let paths: Vec<String> = names
        .iter()
        .map(|n| configs().join(n).to_str().unwrap().to_string())
        .collect();
    let mut args = vec![
        "batch",
        "--jobs",
        "3",
        "--out",
        base.path().to_str().unwrap(),
    ];
    args.extend(paths.iter().map(String::as_str));
    let o = mfobs(&args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(stdout(&o).lines().count(), 3);

    let one = mfobs(&[
        "simulate",
        "--config",
        &paths[1],
        "--out",
        single.path().to_str().unwrap(),
    ]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(
        fs::read(base.path().join("chain3/trajectory.csv")).unwrap(),
        fs::read(single.path().join("trajectory.csv")).unwrap()
    );
}
