use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::Value;

static COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "seqauction-cli-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqauction")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn gen(family: &str, extra: &[&str]) -> PathBuf {
    let path = scratch(&format!("{family}.json"));
    let mut args = vec!["gen", "--family", family, "-o", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn solve_reports_vcg_replication_by_order() {
    let inst = gen("appendix-a", &[]);
    let p = inst.to_str().unwrap();
    let out = run(&["solve", p, "--order", "B,C,A"]);
    assert!(out.status.success());
    let r = json_of(&out);
    assert_eq!(r["results"]["vcg_replicated"], Value::Bool(true));
    assert_eq!(r["command"], "solve");
    assert_eq!(r["instance_digest"].as_str().unwrap().len(), 64);

    let r = json_of(&run(&["solve", p, "--order", "A,B,C"]));
    assert_eq!(r["results"]["vcg_replicated"], Value::Bool(false));
}

#[test]
fn reports_are_deterministic_and_digest_tracks_bytes() {
    let inst = gen("appendix-a", &[]);
    let p = inst.to_str().unwrap();
    let a = run(&["solve", p]);
    let b = run(&["--workers", "2", "solve", p]);
    assert_eq!(a.stdout, b.stdout);
    let with_timing = json_of(&run(&["--timing", "solve", p]));
    assert!(with_timing["timing_ms"].is_u64());
    assert!(json_of(&a).get("timing_ms").is_none());

    let other = gen("appendix-a", &["--epsilon", "0.1"]);
    let c = json_of(&run(&["solve", other.to_str().unwrap()]));
    assert_ne!(c["instance_digest"], json_of(&a)["instance_digest"]);
}

#[test]
fn malformed_input_exits_2() {
    let path = scratch("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["solve", path.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&path, r#"{"players": []}"#).unwrap();
    assert_eq!(run(&["vcg", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn capacity_exits_3() {
    let inst = gen("appendix-a", &[]);
    let out = run(&["solve", inst.to_str().unwrap(), "--max-states", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_then_verify_the_chain_profile() {
    let inst = gen("thm1", &["--k", "2", "--with-profile"]);
    let mut desc = inst.clone().into_os_string();
    desc.push(".profile.json");
    let d: Value = serde_json::from_str(&std::fs::read_to_string(desc).unwrap()).unwrap();
    assert_eq!(d["profile"], "thm1");
    let out = run(&["verify", inst.to_str().unwrap(), "--mode", "dual"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json_of(&out);
    assert_eq!(r["results"]["agree"], Value::Bool(true));
    assert_eq!(r["parameters"]["profile"], "thm1");
}

#[test]
fn verify_budgeted_abstract() {
    let inst = gen("thm1-budgeted", &["--k", "1", "--coarse"]);
    let out = run(&["verify", inst.to_str().unwrap(), "--mode", "abstract"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn vcg_mimic_profile_fails_verification() {
    let inst = gen("appendix-b", &[]);
    let out = run(&["verify", inst.to_str().unwrap(), "--profile", "vcg-mimic"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json_of(&out);
    let ws = r["results"]["report"]["witnesses"].as_array().unwrap();
    assert!(ws.iter().any(|w| w["player"] == "4" && w["resulting_utility"] == "4"));
}

#[test]
fn orderings_and_conjecture() {
    let b = gen("appendix-b", &[]);
    let r = json_of(&run(&["orderings", b.to_str().unwrap()]));
    assert_eq!(r["results"]["orderings"].as_array().unwrap().len(), 6);
    assert_eq!(r["results"]["mode"], "exhaustive");

    let a = gen("appendix-a", &[]);
    let out = run(&["conjecture", a.to_str().unwrap()]);
    assert!(out.status.success());
    let r = json_of(&out);
    assert_eq!(r["results"]["witness"], serde_json::json!(["B", "C", "A"]));

    let i = gen("identical", &[]);
    assert_eq!(run(&["conjecture", i.to_str().unwrap()]).status.code(), Some(5));
}

#[test]
fn poa_csv_grows_and_meets_the_bound() {
    let script = scratch("poa.gp");
    let csv = scratch("poa.csv");
    let out = run(&[
        "poa",
        "--k-from",
        "1",
        "--k-to",
        "6",
        "--gnuplot-script",
        script.to_str().unwrap(),
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,opt,eq,ratio,ratio_exact,bound"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    let ratios: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[0] <= w[1]));
    for (k, r) in rows.iter().enumerate() {
        let k = (k + 1) as f64;
        assert!(r[3].parse::<f64>().unwrap() >= (k + 30.0) / 31.0 - 1e-9);
    }
    let gp = std::fs::read_to_string(&script).unwrap();
    assert!(gp.contains(csv.to_str().unwrap()));
}

#[test]
fn worker_env_var_is_accepted() {
    let inst = gen("appendix-b", &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_seqauction"))
        .args(["vcg", inst.to_str().unwrap()])
        .env("SEQAUCTION_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let r = json_of(&out);
    assert_eq!(r["results"]["welfare"], "9");
}
