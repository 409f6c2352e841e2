use std::path::{Path, PathBuf};
use std::process::Command;

use symlab::output::Table;
use symlab::report::Summary;
use symlab::run::{RunManifest, Status};
use tempfile::TempDir;

fn symlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_symlab")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    symlab(&args)
}

fn column(t: &Table, name: &str) -> Vec<f64> {
    let c = t.column(name).unwrap();
    t.rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

const CORRECTORS: &str = "kind = correctors\nmedium = inverse-cosine\nd = 1\norder = 3\n";

#[test]
fn minimal_corrector_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.cfg", CORRECTORS);
    let out = tmp.path().join("c");
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 0, "{text}");
    let t = Table::read(&out.join("abar.csv")).unwrap();
    let orders = column(&t, "order");
    let values = column(&t, "value");
    assert_eq!(orders, vec![1.0, 2.0, 3.0]);
    assert!((values[0] - 0.5).abs() <= 1e-8);
    assert!(values[1].abs() <= 1e-8 && values[2].abs() <= 1e-8);
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.status, Status::Ok);
    assert_eq!(m.config["order"], "3");
    assert_eq!(m.config["tol"], "0.0000000001");
    assert!(m.timings.contains_key("total"));
    for f in ["growth.csv", "diagnostics.csv", "correctors.bin"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let (set, manifest) = symlab::container::read(&out.join("correctors.bin")).unwrap();
    assert_eq!(manifest.order, 3);
    assert_eq!(set.homogenized_tensor(1).unwrap(), &[values[0]]);
}

#[test]
fn identity_symbol_rows_equal_squared_norm() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "s.cfg", "kind = symbol\nmedium = identity\nd = 2\nmodes = 4\npoints = 20\n");
    let out = tmp.path().join("s");
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 0, "{text}");
    let t = Table::read(&out.join("symbol.csv")).unwrap();
    assert_eq!(t.rows.len(), 20);
    for (re, n) in column(&t, "re").iter().zip(column(&t, "norm")) {
        assert!((re - n * n).abs() <= 1e-10 * n * n);
    }
    assert!(out.join("symbol.svg").is_file());
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.headline["band_violations"], 0);
}

#[test]
fn validation_failures_exit_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    for (i, body) in [
        "kind = correctors\nmedium = identity\nflavour = strange\n",
        "kind = correctors\nmedium = identity\nd = 1\norder = 9\n",
        "kind = correctors\nmedium = laminate\namplitude = 1.5\nd = 2\n",
        "kind = rate\nmedium = laminate\nd = 2\neps = 0.4, 0.2, 0.1\n",
        "kind = mc\nside = 8\nd = 2\nexact = true\n",
        "kind = two-scale\nmedium = identity\nd = 1\neps = 0.3\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = config(tmp.path(), &format!("bad{i}.cfg"), body);
        let out = tmp.path().join(format!("bad{i}"));
        let (code, text) = run(&cfg, &out, &[]);
        assert_eq!(code, 2, "{body}: {text}");
        assert!(!out.exists(), "{body}");
    }
    let (code, _) = symlab(&["run", tmp.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn collisions_need_force_and_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.cfg", CORRECTORS);
    let out = tmp.path().join("c");
    assert_eq!(run(&cfg, &out, &[]).0, 0);
    let first = std::fs::read(out.join("abar.csv")).unwrap();
    let growth = std::fs::read(out.join("growth.csv")).unwrap();
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 2, "{text}");
    assert_eq!(run(&cfg, &out, &["--force"]).0, 0);
    assert_eq!(std::fs::read(out.join("abar.csv")).unwrap(), first);
    assert_eq!(std::fs::read(out.join("growth.csv")).unwrap(), growth);
}

#[test]
fn mc_is_schedule_independent_and_seed_override_applies() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "mc.cfg",
        "kind = mc\nd = 1\nside = 2\ndelta = 0.1\nk = 1\nsamples = 256\nexact = true\nseed = 5\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&cfg, &a, &["--threads", "1"]).0, 0);
    assert_eq!(run(&cfg, &b, &["--threads", "3"]).0, 0);
    for f in ["mc.csv", "exact.csv", "second_differences.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = RunManifest::read(&a).unwrap();
    assert_eq!(m.headline["band_violations"], 0);
    assert!(m.headline["max_z"].as_f64().unwrap() < 3.0);
    let c = tmp.path().join("c");
    assert_eq!(run(&cfg, &c, &["--seed", "77"]).0, 0);
    assert_eq!(RunManifest::read(&c).unwrap().config["seed"], "77");
    assert_ne!(std::fs::read(a.join("mc.csv")).unwrap(), std::fs::read(c.join("mc.csv")).unwrap());
}

#[test]
fn every_kind_runs_at_small_size() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("taylor", "kind = taylor\nmedium = inverse-cosine\nd = 1\nmodes = 12\ndegree = 4\n", "discrepancy.csv"),
        ("two", "kind = two-scale\nmedium = inverse-cosine\nd = 1\nmodes = 24\neps = 0.25\nperiod = 4\ncutoff = 4\n", "two_scale.csv"),
        ("per", "kind = periodize\nd = 1\nsides = 2, 4\ndelta = 0.1\npairs = 8\n", "differences.csv"),
        ("pw", "kind = symbol\nmedium = piecewise\nd = 1\ncells = 2\nvalues = 0.5, 1\nmodes = 8\npoints = 4\n", "symbol.csv"),
    ];
    for (name, body, file) in cases {
        let cfg = config(tmp.path(), &format!("{name}.cfg"), body);
        let out = tmp.path().join(name);
        let (code, text) = run(&cfg, &out, &[]);
        assert_eq!(code, 0, "{name}: {text}");
        assert!(out.join(file).is_file(), "{name}");
    }
    let t = Table::read(&tmp.path().join("taylor/discrepancy.csv")).unwrap();
    assert!(column(&t, "discrepancy").iter().all(|x| *x <= 1e-7));
    let t = Table::read(&tmp.path().join("two/identity.csv")).unwrap();
    assert!(column(&t, "residual").iter().all(|x| *x <= 1e-8));
}

#[test]
fn solver_failure_exits_3_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "f.cfg",
        "kind = correctors\nmedium = laminate\nd = 2\nmodes = 8\nmax_iter = 1\ntol = 1e-12\n",
    );
    let out = tmp.path().join("f");
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 3, "{text}");
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.exit_code, 3);
    assert!(m.error.unwrap().contains("converge"));
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn report_on_rate_run_has_slope_and_prefactor() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let cfg = config(
        tmp.path(),
        "r.cfg",
        "kind = rate\nmedium = laminate\nd = 2\nmodes = 6\nperiod = 6\ncutoff = 5\nell = 1\n",
    );
    let (code, text) = run(&cfg, &runs.join("rate"), &[]);
    assert_eq!(code, 0, "{text}");
    let rate = Table::read(&runs.join("rate/rate.csv")).unwrap();
    assert_eq!(rate.header, ["eps", "error", "weighted_norm", "ratio"]);
    assert_eq!(symlab(&["report", runs.to_str().unwrap()]).0, 0);
    let s = summary(&runs);
    assert_eq!((s.run_count, s.failed_count, s.warning_count), (1, 0, 0));
    let h = &s.runs[0].headline;
    assert!(h["slope"].as_f64().unwrap() > 1.0);
    assert!(h["prefactor"].as_f64().unwrap() > 0.0);
    assert_eq!(s.runs[0].plots, ["rate/rate.svg"]);
    let index = std::fs::read_to_string(runs.join("index.html")).unwrap();
    assert!(index.contains("rate/rate.svg") && index.contains("0 warnings"));
}

#[test]
fn report_on_empty_directory_warns_once() {
    let tmp = TempDir::new().unwrap();
    let (code, text) = symlab(&["report", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let s = summary(tmp.path());
    assert_eq!((s.run_count, s.warning_count), (0, 1));
    assert!(s.runs.is_empty());
}

#[test]
fn report_marks_failed_runs() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let ok = config(tmp.path(), "ok.cfg", CORRECTORS);
    let bad = config(
        tmp.path(),
        "bad.cfg",
        "kind = correctors\nmedium = laminate\nd = 2\nmodes = 8\nmax_iter = 1\ntol = 1e-12\n",
    );
    assert_eq!(run(&ok, &runs.join("a"), &[]).0, 0);
    assert_eq!(run(&bad, &runs.join("b"), &[]).0, 3);
    std::fs::create_dir(runs.join("stray")).unwrap();
    let (code, _) = symlab(&["report", runs.to_str().unwrap()]);
    assert_eq!(code, 3);
    let s = summary(&runs);
    assert_eq!((s.run_count, s.failed_count, s.warning_count), (2, 1, 1));
    assert_eq!(s.runs[1].status, Status::Failed);
    assert!(std::fs::read_to_string(runs.join("index.html")).unwrap().contains("FAILED"));
}
