use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_censorlab"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// A /24 behind four routers with a web server, a resolver and a script
/// that triggers residual censorship.
fn fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "http.rules", "# rules\n.*twitter\\.com.*\n^doh\\..*\n");
    write(dir.path(), "dns.rules", ".*twitter\\.com.*\n");
    write(
        dir.path(),
        "scenario.json",
        r#"{
  "seed": 3,
  "blocklist_files": {"http": "http.rules", "https": "http.rules", "dns": "dns.rules"},
  "filtered": [{"prefix": "95.85.96.0/28", "fraction": 0.5}, {"ips": ["95.85.96.53", "95.85.96.80", "95.85.96.200"]}],
  "paths": [{"prefix": "95.85.96.0/24", "hops": ["10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.4"], "censor_after": 2}],
  "hosts": [
    {"ip": "95.85.96.80", "kind": "http_server"},
    {"ip": "95.85.96.53", "kind": "dns_resolver", "zone": {"twitter.com": "93.184.216.34"}}
  ],
  "script": [
    {"t_us": 1000000, "src": "198.51.100.5", "dst": "95.85.96.7", "packet": "tcp", "flags": "PA", "http_get": "twitter.com"},
    {"t_us": 10000000, "src": "198.51.100.5", "dst": "95.85.96.7", "packet": "tcp", "flags": "PA", "http_get": "twitter.com"}
  ]
}"#,
    );
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(d.path(), &["impact", "--rules", "r.txt", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(run(d.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible() {
    let d = fixture();
    for t in ["a.jsonl", "b.jsonl"] {
        let o = run(
            d.path(),
            &["simulate", "--scenario", "scenario.json", "--seed", "7", "--trace", t],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(d.path().join(format!("{t}.manifest.json")).exists());
    }
    let a = std::fs::read(d.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(d.path().join("b.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().contains("inject"));
}

#[test]
fn probe_without_targets_names_the_pool() {
    let d = fixture();
    write(
        d.path(),
        "plan.json",
        r#"{"domains": ["twitter.com"], "sources": ["198.51.100.10"]}"#,
    );
    let o = run(
        d.path(),
        &["probe", "--plan", "plan.json", "--scenario", "scenario.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("target"), "{err}");
}

#[test]
fn scan_then_probe() {
    let d = fixture();
    write(d.path(), "pfx2as.txt", "95.85.96.0\t28\t20661\n10.9.0.0\t24\t1\n");
    let o = run(
        d.path(),
        &[
            "scan",
            "--scenario",
            "scenario.json",
            "--pfx2as",
            "pfx2as.txt",
            "--asn",
            "20661",
            "--out",
            "scan.jsonl",
            "--summary",
            "fractions.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fractions: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("fractions.json")).unwrap()).unwrap();
    let http = fractions
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["protocol"] == "http")
        .expect("http fraction");
    assert_eq!(http["prefix"], "95.85.96.0/28");
    assert_eq!(http["filtered"], 8);

    write(
        d.path(),
        "domains.txt",
        "# test\ntwitter.com\nexample.com\nmy-twitter.com.tm\ndoh.example\n",
    );
    write(
        d.path(),
        "plan.json",
        r#"{"domains": [], "protocols": ["http", "dns"], "sources": ["198.51.100.10"]}"#,
    );
    let o = run(
        d.path(),
        &[
            "probe",
            "--plan",
            "plan.json",
            "--scenario",
            "scenario.json",
            "--domains",
            "domains.txt",
            "--targets",
            "scan.jsonl",
            "--out",
            "records.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("records.jsonl")).unwrap();
    let mut censored: Vec<(String, String)> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|r| r["verdict"] == "Censored" && r["control"] == false)
        .map(|r| {
            (
                r["protocol"].as_str().unwrap().to_string(),
                r["domain"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    censored.sort();
    let want: Vec<(String, String)> = [
        ("dns", "my-twitter.com.tm"),
        ("dns", "twitter.com"),
        ("http", "doh.example"),
        ("http", "my-twitter.com.tm"),
        ("http", "twitter.com"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    assert_eq!(censored, want);
    assert!(d.path().join("records.jsonl.manifest.json").exists());
}

#[test]
fn impact_report_is_ranked() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "r.txt", ".*twitter\\.com.*\n.*\\.cyou.*\n");
    write(
        d.path(),
        "c.txt",
        "financetwitter.com\nexample.org\ncommittee.cyou\nstarlink.cyou\n",
    );
    let o = run(d.path(), &["impact", "--rules", "r.txt", "--corpus", "c.txt"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["rule"], r".*\.cyou.*");
    assert_eq!(lines[0]["count"], 2);
    assert_eq!(lines[1]["count"], 1);
    assert_eq!(
        run(d.path(), &["impact", "--rules", "r.txt", "--corpus", "missing.txt"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn infer_recovers_rule() {
    let d = fixture();
    let o = run(
        d.path(),
        &[
            "infer",
            "--scenario",
            "scenario.json",
            "--domain",
            "doh.gov.ae",
            "--protocol",
            "http",
            "--target",
            "95.85.96.200",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rule"], r"^doh\..*");
    let budget = 4 * "doh.gov.ae".len() + 8;
    assert!(v["probes_used"].as_u64().unwrap() as usize <= budget);
}

#[test]
fn evade_builtin_and_text() {
    let d = fixture();
    let o = run(
        d.path(),
        &[
            "evade",
            "--builtin",
            "segmentation-http",
            "--protocol",
            "http",
            "--domain",
            "twitter.com",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["successful"], true);

    let o = run(
        d.path(),
        &[
            "evade",
            "--strategy",
            r"[DNS:*:*]-tamper{DNS:ancount:replace:32}-| \/",
            "--protocol",
            "dns",
            "--domain",
            "twitter.com",
            "--scenario",
            "scenario.json",
            "--trace",
            "t.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["successful"], true);
    assert!(!std::fs::read_to_string(d.path().join("t.jsonl")).unwrap().is_empty());

    let o = run(
        d.path(),
        &[
            "evade",
            "--builtin",
            "nope",
            "--protocol",
            "http",
            "--domain",
            "twitter.com",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sandwich-v1"));
}

#[test]
fn localize_reports_hop() {
    let d = fixture();
    let o = run(
        d.path(),
        &["localize", "--scenario", "scenario.json", "--target", "95.85.96.200"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["censor_hop"], 3);
    assert_eq!(v["path"][0], "10.0.0.1");
}
