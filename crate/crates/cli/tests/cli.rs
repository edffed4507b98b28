use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn molehill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molehill"))
        .args(args)
        .env_remove("MOLEHILL_LLM_URL")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/fixture").join(name).display().to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn generate_writes_sixteen_charts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = molehill(&["generate", "--seed", "1", "--count", "16", "--out", &p(tmp.path(), "c.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let charts: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(charts.len(), 16);
    assert_eq!(charts[0]["points"].as_array().unwrap().len(), 71);
}

#[test]
fn usage_errors_exit_one() {
    let out = molehill(&["generate", "--seed", "1", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&molehill(&[])), 1);
    assert_eq!(code(&molehill(&["generate", "--seed", "1", "--count", "0"])), 1);
    assert_eq!(code(&molehill(&["render", "--signal", "x.csv", "--width", "50", "--margin", "40"])), 1);
}

#[test]
fn help_exits_zero_everywhere() {
    assert_eq!(code(&molehill(&["--help"])), 0);
    assert_eq!(code(&molehill(&["--version"])), 0);
    for sub in ["generate", "metrics", "ingest", "analyze", "detect", "label", "render", "prompt", "pipeline"] {
        let out = molehill(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn empty_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&molehill(&["generate", "--seed", "2", "--count", "2", "--out", &p(d, "c.json")])), 0);
    std::fs::write(d.join("a.csv"), "participant_id,chart_id,x_position,word,timestamp\n").unwrap();
    std::fs::write(d.join("l.csv"), "word,pos\n").unwrap();
    let ingest = molehill(&[
        "ingest", "--charts", &p(d, "c.json"), "--annotations", &p(d, "a.csv"), "--lexicon", &p(d, "l.csv"),
        "--out", &p(d, "ds.bin"),
    ]);
    assert_eq!(code(&ingest), 0, "{}", String::from_utf8_lossy(&ingest.stderr));
    let out = molehill(&["analyze", "--dataset", &p(d, "ds.bin")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no annotation records"));
    assert_eq!(code(&molehill(&["analyze", "--dataset", &p(d, "missing.json")])), 2);
}

fn run_chain(d: &Path) {
    let ok = |args: &[&str]| {
        let out = molehill(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["metrics", "--charts", &fixture("charts.json"), "--out", &p(d, "metrics.json")]);
    ok(&[
        "ingest", "--charts", &fixture("charts.json"), "--annotations", &fixture("annotations.csv"),
        "--lexicon", &fixture("lexicon.csv"), "--strict", "--out", &p(d, "ds.json"),
    ]);
    ok(&["analyze", "--dataset", &p(d, "ds.json"), "--out", &p(d, "stats.json"), "--newick", &p(d, "tree.nwk")]);
    let mut csv = String::from("date,close\n");
    for i in 0..120 {
        let y = if (40..70).contains(&i) { (i - 40) as f64 * 0.5 } else if i >= 70 { 15.0 - (i - 70) as f64 * 0.1 } else { 0.0 };
        csv.push_str(&format!("2014-{:02}-{:02},{y}\n", 1 + i / 28, 1 + i % 28));
    }
    std::fs::write(d.join("signal.csv"), csv).unwrap();
    ok(&["detect", "--signal", &p(d, "signal.csv"), "--dataset", &p(d, "ds.json"), "--max-z", "-3", "--out", &p(d, "regions.json")]);
    ok(&["label", "--signal", &p(d, "signal.csv"), "--stats", &p(d, "stats.json"), "--out", &p(d, "labels.json")]);
    ok(&[
        "render", "--signal", &p(d, "signal.csv"), "--regions", &p(d, "regions.json"), "--labels",
        &p(d, "labels.json"), "--out", &p(d, "chart.svg"),
    ]);
    let prompt = ok(&["prompt", "--region", &p(d, "regions.json"), "--symbol", "ALK"]);
    std::fs::write(d.join("prompt.txt"), prompt.stdout).unwrap();
    ok(&["pipeline", "--seed", "4", "--participants", "6", "--out-dir", &p(d, "pipe")]);
}

#[test]
fn every_step_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_chain(a.path());
    run_chain(b.path());
    let files = [
        "metrics.json", "ds.json", "stats.json", "tree.nwk", "regions.json", "labels.json", "chart.svg", "prompt.txt",
        "pipe/charts.json", "pipe/annotations.csv", "pipe/stats.json", "pipe/regions.json", "pipe/labels.json",
        "pipe/chart.svg",
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs between runs");
    }
    let prompt = std::fs::read_to_string(a.path().join("prompt.txt")).unwrap();
    assert!(prompt.starts_with("What happened between "), "{prompt}");
    assert!(prompt.trim_end().ends_with('?') && prompt.contains("stock symbol ALK to "));
    let regions: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("regions.json")).unwrap()).unwrap();
    assert!(!regions.is_empty());
}

#[test]
fn sending_without_endpoint_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("r.json"), "[]").unwrap();
    let out = molehill(&["prompt", "--region", &p(tmp.path(), "r.json"), "--symbol", "ALK", "--send"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("MOLEHILL_LLM_URL"));
}

#[test]
fn endpoint_failure_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { break };
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf);
            let _ = s.write_all(b"HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
        }
    });
    let tmp = tempfile::tempdir().unwrap();
    let region = r#"[{"start_index":0,"end_index":1,"start_x":16259.0,"end_x":16260.0,"words":[{"word":"tank","votes":1}],"best_mae":0.0,"best_z":0.0}]"#;
    std::fs::write(tmp.path().join("r.json"), region).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_molehill"))
        .args(["prompt", "--region", &p(tmp.path(), "r.json"), "--symbol", "ALK", "--send", "--retries", "1", "--timeout-secs", "5"])
        .env("MOLEHILL_LLM_URL", format!("http://{addr}/v1/chat/completions"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("500"));
}

#[test]
fn prompt_renders_region_dates() {
    let tmp = tempfile::tempdir().unwrap();
    // 16259 days after 1970-01-01 is 2014-07-08
    let region = r#"[{"start_index":0,"end_index":1,"start_x":16259.0,"end_x":16260.0,"words":[{"word":"tank","votes":1}],"best_mae":0.0,"best_z":0.0}]"#;
    std::fs::write(tmp.path().join("r.json"), region).unwrap();
    let out = molehill(&["prompt", "--region", &p(tmp.path(), "r.json"), "--symbol", "ALK"]);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "What happened between July 8, 2014 and July 9, 2014 that caused the stock symbol ALK to tank?\n"
    );
    let out = molehill(&["prompt", "--region", &p(tmp.path(), "r.json"), "--symbol", "ALK", "--index", "3"]);
    assert_eq!(code(&out), 2);
}
