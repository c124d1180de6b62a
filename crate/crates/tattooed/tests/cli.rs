use std::path::Path;
use std::process::{Command, Output};

fn tattooed(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tattooed"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn prepare(dir: &Path) {
    for args in [
        &["keygen", "--out", "k.key"][..],
        &["synth", "--layers", "784,32,10", "--seed", "7", "--out", "m.tnsr"],
        &[
            "mark", "--model", "m.tnsr", "--key", "k.key", "--payload", "CLI test", "--gamma", "0.09",
            "--out", "w.tnsr", "--record", "w.wmrec",
        ],
    ] {
        let out = tattooed(dir, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn verify_exit_codes_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let ok = tattooed(d, &["--json", "verify", "--model", "w.tnsr", "--record", "w.wmrec", "--key", "k.key", "--baseline", "m.tnsr"]);
    assert_eq!(ok.status.code(), Some(0));
    let v = json(&ok);
    assert_eq!(v["decision"], 1);
    assert_eq!(v["watermark_accuracy"], 1.0);
    assert_eq!(v["extracted_payload"], hex::encode("CLI test"));

    let neg = tattooed(d, &["verify", "--model", "m.tnsr", "--record", "w.wmrec", "--key", "k.key", "--baseline", "m.tnsr"]);
    assert_eq!(neg.status.code(), Some(10));

    let mismatch = tattooed(d, &["--json", "verify", "--model", "w.tnsr", "--record", "w.wmrec", "--key", "k.key", "--baseline", "w.tnsr"]);
    assert_eq!(mismatch.status.code(), Some(7));
    assert_eq!(json(&mismatch)["error"]["class"], "baseline_mismatch");
}

#[test]
fn operational_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    std::fs::write(d.join("bad.key"), b"short").unwrap();
    std::fs::write(d.join("bad.tnsr"), b"TNSR0001garbage").unwrap();
    let base = ["--record", "w.wmrec", "--baseline", "m.tnsr"];
    let missing = tattooed(d, &[&["verify", "--model", "nope.tnsr", "--key", "k.key"][..], &base].concat());
    let format = tattooed(d, &[&["verify", "--model", "bad.tnsr", "--key", "k.key"][..], &base].concat());
    let key = tattooed(d, &[&["verify", "--model", "w.tnsr", "--key", "bad.key"][..], &base].concat());
    let usage = tattooed(d, &["verify", "--model", "w.tnsr"]);
    let codes: Vec<_> = [&missing, &format, &key, &usage].iter().map(|o| o.status.code().unwrap()).collect();
    assert_eq!(codes, vec![3, 4, 5, 2]);
    let big = tattooed(d, &["mark", "--model", "m.tnsr", "--key", "k.key", "--payload", &"x".repeat(200), "--out", "o.tnsr", "--record", "o.wmrec"]);
    assert_eq!(big.status.code(), Some(6));
}

#[test]
fn attack_unshuffle_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let no_seed = tattooed(d, &["attack", "--model", "w.tnsr", "--kind", "prune", "--intensity", "0.5", "--out", "p.tnsr"]);
    assert_eq!(no_seed.status.code(), Some(2));

    let shuf = tattooed(d, &["attack", "--model", "w.tnsr", "--kind", "shuffle", "--seed", "3", "--out", "s.tnsr", "--map", "s.json"]);
    assert!(shuf.status.success());
    let uns = tattooed(d, &["unshuffle", "--model", "s.tnsr", "--baseline", "m.tnsr", "--record", "w.wmrec", "--key", "k.key", "--out", "u.tnsr"]);
    assert!(uns.status.success(), "{}", String::from_utf8_lossy(&uns.stderr));
    assert_eq!(std::fs::read(d.join("u.tnsr")).unwrap(), std::fs::read(d.join("w.tnsr")).unwrap());

    let sweep = tattooed(d, &["sweep-prune", "--model", "w.tnsr", "--record", "w.wmrec", "--key", "k.key", "--baseline", "m.tnsr", "--seed", "1", "--out", "p.csv"]);
    assert!(sweep.status.success());
    let csv = std::fs::read_to_string(d.join("p.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fraction,watermark_accuracy,snr_db");
    let fractions: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(fractions, ["0.25", "0.5", "0.75", "0.9", "0.95", "0.99", "0.9975", "0.9999"]);

    let gamma = tattooed(d, &["--json", "sweep-gamma", "--model", "m.tnsr", "--key", "k.key", "--payload", "g", "--grid", "0.01,0.09"]);
    assert!(gamma.status.success());
    assert_eq!(json(&gamma)["rows"].as_array().unwrap().len(), 2);

    let dist = tattooed(d, &["--json", "distcheck", "--a", "m.tnsr", "--b", "m.tnsr"]);
    assert_eq!(json(&dist)["ks_statistic"], 0.0);
}
