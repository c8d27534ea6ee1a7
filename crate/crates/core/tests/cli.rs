use std::process::Command;

fn run(args: &[&str]) -> (Option<i32>, String, String) {
    let out =
        Command::new(env!("CARGO_BIN_EXE_schwarzian")).args(args).env_remove("SCHWARZIAN_CONFIG").output().unwrap();
    (out.status.code(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn schwarzian_of_mobius_is_zero() {
    let (code, out, _) = run(&["eval", "schwarzian", "--f", "mobius(2,1,1,1)", "--at", "0"]);
    assert_eq!(code, Some(0));
    assert_eq!(out.trim(), "0");
}

#[test]
fn schwarzian_of_tan() {
    let (code, out, _) = run(&["eval", "schwarzian", "--f", "tan(x)", "--at", "1/10"]);
    assert_eq!(code, Some(0));
    let v: f64 = out.trim().parse().unwrap();
    assert!((v - 2.0).abs() <= 1e-10);
}

#[test]
fn first_transvectant_by_hand() {
    // 2φψ' - 2φ'ψ with φ = x, ψ = x^2 at 1.
    let (code, out, _) =
        run(&["eval", "transvectant", "--m", "1", "--l1", "1", "--l2", "1", "--phi", "x", "--psi", "x^2", "--at", "1"]);
    assert_eq!(code, Some(0));
    assert_eq!(out.trim(), "2");
}

#[test]
fn cocycle_and_bol_eval() {
    // S(x + x^3) at 1: f' = 4, f'' = 6, f''' = 6, so 6/4 - 3/2·(6/4)^2.
    let (_, out, _) = run(&["eval", "cocycle", "--family", "S", "--lambda", "-1/2", "--f", "x + x^3", "--at", "1"]);
    assert_eq!(out.trim(), "-15/8");
    let (_, out, _) = run(&["eval", "bol", "--k", "3", "--phi", "x^4", "--at", "1"]);
    assert_eq!(out.trim(), "24");
}

#[test]
fn solve_pairing_listings() {
    let (code, out, _) = run(&["solve-pairing", "--m", "4", "--lambda", "1/2", "--vanish"]);
    assert_eq!(code, Some(0));
    assert_eq!(out.trim(), "X'''φ' - 1/4·X''''φ");
    let (_, out, _) = run(&["solve-pairing", "--m", "3", "--lambda", "2", "--vanish"]);
    assert_eq!(out.trim(), "X'''φ");
    let (code, out, _) = run(&["solve-pairing", "--m", "2", "--lambda", "1/2", "--vanish"]);
    assert_eq!(code, Some(0));
    assert!(!out.trim().is_empty());
}

#[test]
fn sextic_at_one_is_not_a_cocycle() {
    let (code, out, _) = run(&["verify", "lemma-6-2", "--lambda", "1"]);
    assert_eq!(code, Some(0));
    assert!(out.contains("not a cocycle"));
    assert!(out.contains("PASS"));
}

#[test]
fn json_report_shape() {
    let (code, out, _) = run(&["verify", "bol-equivariance", "--format", "json", "--seed", "3"]);
    assert_eq!(code, Some(0));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["suite"], "bol-equivariance");
    assert_eq!(v["seed"], 3);
    assert!(v["elapsed_ms"].is_null());
    for c in v["checks"].as_array().unwrap() {
        assert_eq!(c["residual"], "0");
        assert!(!c["anchor"].as_str().unwrap().is_empty());
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["eval", "schwarzian", "--f", "x+", "--at", "0"]).0, Some(2));
    assert_eq!(run(&["verify", "no-such-suite"]).0, Some(2));
    assert_eq!(run(&["frobnicate"]).0, Some(2));
    // f' vanishes at 0.
    assert_eq!(run(&["eval", "schwarzian", "--f", "x^3", "--at", "0"]).0, Some(1));
    assert_eq!(run(&["symbol", "--k", "2", "--nu", "0", "--rho", "3/2"]).0, Some(1));
}

#[test]
fn config_file_from_env() {
    let dir = std::env::temp_dir().join(format!("schwarzian-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, "seed = 11\nformat = \"json\"\ntrials = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_schwarzian"))
        .args(["verify", "bol-equivariance"])
        .env("SCHWARZIAN_CONFIG", &path)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    std::fs::write(&path, "bogus = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_schwarzian"))
        .args(["verify", "bol-equivariance"])
        .env("SCHWARZIAN_CONFIG", &path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}
