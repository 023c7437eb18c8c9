use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eventimpact")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Two days of large-tick flow.
fn simulated(dir: &Path) -> String {
    let cfg = dir.join("c.txt");
    fs::write(&cfg, "preset = large_tick\nn_events = 40000\nevents_per_day = 20000\nseed = 3\n").unwrap();
    let out = dir.join("s.csv");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    out.to_str().unwrap().to_string()
}

const SMALL: [&str; 6] = ["--max-lag", "40", "--bootstrap", "5", "--kernel-lag", "8"];

#[test]
fn simulate_then_stats_gives_stats_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated(dir.path());
    let out = dir.path().join("stats.json");
    ok(&["stats", "--in", &csv, "--out", out.to_str().unwrap(), "--max-lag", "40", "--bootstrap", "5"]);
    let v = json_file(&out);
    let p: f64 = v["P"].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
    assert!((p - 1.0).abs() < 1e-12);
    assert_eq!(v["lags"].as_array().unwrap().len(), 41);
    assert_eq!(v["units"]["D"], "ticks^2");
    assert_eq!(v["meta"]["events"], 40000);
    assert!(v["C"]["MOP->MOP"].is_array());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated(dir.path());
    for cmd in ["stats", "propagate", "spread"] {
        let mut args = vec![cmd, "--in", &csv, "--bootstrap", "5", "--max-lag", "40"];
        if cmd == "spread" {
            args.extend(["--alpha", "0"]);
        }
        let (a, b) = (ok(&args).stdout, ok(&args).stdout);
        assert!(!a.is_empty());
        assert_eq!(a, b, "{cmd}");
    }
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let o = run(&["stats", "--no-such-flag"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn runtime_errors_are_json_on_stderr() {
    let o = run(&["stats", "--in", "/nonexistent/events.csv"]);
    assert!(!o.status.success());
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "Io");
    assert!(v["message"].is_string());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "nope\n1,2\n").unwrap();
    let o = run(&["stats", "--in", bad.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "SchemaError");
}

#[test]
fn ingest_writes_events_and_balanced_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (bbo, trades, out) = (dir.path().join("b.csv"), dir.path().join("t.csv"), dir.path().join("e.csv"));
    // 10:00 New York on 2020-09-14 in UTC nanoseconds.
    let t0: i64 = 18_519 * 86_400_000_000_000 + 15 * 3_600_000_000_000;
    fs::write(
        &bbo,
        format!(
            "timestamp_ns,bid_price,bid_size,ask_price,ask_size\n{},10.00,100,10.02,100\n{},10.01,50,10.02,100\n{},10.01,50,10.03,80\n",
            t0,
            t0 + 5_000_000,
            t0 + 10_200_000
        ),
    )
    .unwrap();
    fs::write(&trades, format!("timestamp_ns,price,size,aggressor_side\n{},10.02,100,1\n", t0 + 10_000_000)).unwrap();
    let o = ok(&[
        "ingest",
        "--in",
        bbo.to_str().unwrap(),
        "--trades",
        trades.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["balanced"], true);
    assert_eq!(v["events"], 2);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("timestamp_ns,day,type"));
    assert!(rows[1].contains(",LOP,"));
    assert!(rows[2].contains(",MOP,"));
}

#[test]
fn report_bundles_every_family() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated(dir.path());
    let out = dir.path().join("report");
    let mut args = vec!["report", "--in", &csv, "--out", out.to_str().unwrap(), "--trim", "0,0"];
    args.extend(SMALL);
    ok(&args);
    for f in ["stats", "propagator", "gapmodel", "closure", "spread"] {
        let v = json_file(&out.join(format!("{f}.json")));
        assert!(v["units"].is_object(), "{f}");
    }
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("family,quantity,series,lag,value,units\n"));
    for needle in ["\nstats,C,MOP->MOP,0,", "\npropagator,G,MOP,1,", "\ngapmodel,Gstar,MOP,1,", "\nclosure,D_closure,,1,", "\nspread,RS_pred,"] {
        assert!(curves.contains(needle), "{needle}");
    }
    let closure = json_file(&out.join("closure.json"));
    assert_eq!(closure["D0"], 0.04);
    assert_eq!(closure["D_closure"].as_array().unwrap().len(), 40);
    assert!(fs::read_to_string(out.join("stats.csv")).unwrap().starts_with("quantity,pi1,pi2,lag,value,stderr,count,units"));
}

#[test]
fn gaps_and_closure_honour_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated(dir.path());
    let mut args = vec!["gaps", "--in", &csv, "--trim", "0,0", "--lambda", "0.001"];
    args.extend(SMALL);
    let v: Value = serde_json::from_slice(&ok(&args).stdout).unwrap();
    assert_eq!(v["lambda"], 0.001);
    assert_eq!(v["meta"]["kernel_lag"], 8);
    assert_eq!(v["kappa"]["MOP->MOP"].as_array().unwrap().len(), 8);
    args[0] = "closure";
    args.extend(["--d0", "0.5"]);
    let v: Value = serde_json::from_slice(&ok(&args).stdout).unwrap();
    assert_eq!(v["D0"], 0.5);
}

#[test]
fn spread_fits_alpha_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated(dir.path());
    let v: Value = serde_json::from_slice(&ok(&["spread", "--in", &csv, "--max-lag", "40", "--bootstrap", "5"]).stdout).unwrap();
    let fitted = v["alpha_fit"]["alpha"].as_f64().unwrap();
    assert_eq!(v["alpha"].as_f64().unwrap(), fitted);
    assert_eq!(v["alpha_fit"]["grid"].as_array().unwrap().len(), 41);
    let o = run(&["spread", "--in", &csv, "--alpha", "1.5"]);
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "AlphaOutOfRange");
}

#[test]
fn selftest_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("st");
    let o = ok(&["selftest", "--out", out.to_str().unwrap(), "--events", "100000", "--max-lag", "60", "--kernel-lag", "10"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(out.join("selftest.json").exists());
}
