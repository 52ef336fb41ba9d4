use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qmeanlab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qmeanlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn hard_then_estimate() {
    let out = scratch("low.json");
    let st = bin()
        .args(["hard", "--family", "low", "--params", "n=4,d=32,sigma=1,seed=3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_file_name("low.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["family"], "low");
    assert_eq!(meta["designed_cov_trace"], 1.0);

    let run = |seed: &str| {
        let o = bin()
            .args(["estimate", "--estimator", "classical", "--n", "16", "--delta", "0.1", "--seed", seed, "--spec"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["estimator_id"], "classical");
    assert_eq!(report["ledger"]["classical_samples"], 16);
    assert_eq!(report["params"]["seed"], 7);
}

#[test]
fn perturbed_noise_is_parsed_and_bad_noise_rejected() {
    let spec = scratch("point.json");
    std::fs::write(&spec, r#"{"d": 2, "prob": [0.5, 0.5], "values": [[0.1, 0.2], [-0.1, 0.05]]}"#).unwrap();
    let ok = bin()
        .args(["estimate", "--estimator", "qphase", "--n", "16", "--nprime", "64", "--delta", "0.1"])
        .args(["--noise", "perturbed:0.01,0.002", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["params"]["noise"]["mode"], "perturbed");

    let bad = bin()
        .args(["estimate", "--estimator", "bounded", "--n", "16", "--delta", "0.1", "--noise", "loud", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("noise"));
}

#[test]
fn sweep_prints_csv_and_writes_plot_data() {
    let cfg = scratch("cfg.json");
    let rows = scratch("rows.json");
    let plot = scratch("plot.txt");
    let doc = serde_json::json!({
        "source": {"battery": {"kind": "basis", "d": 2, "seed": 1}},
        "estimator": "bounded",
        "n": 32,
        "delta": 0.1,
        "trials": 5,
        "seed": 11,
        "sweep": {"n": [32, 64, 128, 256]},
        "output": rows,
    });
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let o = bin()
        .args(["sweep", "--plot", "error-vs-budget", "--config"])
        .arg(&cfg)
        .arg("--plot-out")
        .arg(&plot)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("estimator,n,n_prime,d,delta,"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 5);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rows).unwrap()).unwrap();
    assert_eq!(saved.as_array().unwrap().len(), 4);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let cfg = scratch("bad.json");
    std::fs::write(&cfg, r#"{"source": {"battery": {"kind": "basis", "d": 2, "seed": 1}}, "estimator": "bounded", "n": 8, "delta": 0.1, "trials": 1, "bogus": 1}"#).unwrap();
    let o = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn check_passes() {
    let o = bin().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 9);
}
