use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

const STAGES: [&str; 5] = ["sample", "summarize", "pair", "judge", "report"];

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn fixture_config() -> PathBuf {
    fixture_dir().join("delibench.toml")
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delibench"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(config: &Path, out: &Path, args: &[&str]) -> Output {
    let o = run(config, out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn manifest_count(out: &Path) -> usize {
    std::fs::read_dir(out.join("manifests")).unwrap().count()
}

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        for stage in STAGES {
            ok(&fixture_config(), out, &[stage]);
        }
    }
    let (ra, rb) = (files_under(&a.join("report")), files_under(&b.join("report")));
    assert!(ra.contains_key("stub/leaderboard.txt"));
    assert!(ra.contains_key("stub/correlations.json"));
    assert_eq!(ra, rb);
    for artifact in ["sample/subsets.jsonl", "summarize/summaries.jsonl", "pair/pairs.jsonl", "judge/stub/scores.jsonl"] {
        assert_eq!(
            std::fs::read(a.join(artifact)).unwrap(),
            std::fs::read(b.join(artifact)).unwrap(),
            "{artifact}"
        );
    }
    assert!(start.elapsed() < Duration::from_secs(60));
}

#[test]
fn rerun_with_unchanged_inputs_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    for stage in STAGES {
        ok(&fixture_config(), out, &[stage]);
    }
    let before = manifest_count(out);
    let report = std::fs::read(out.join("report/stub/leaderboard.txt")).unwrap();
    for stage in STAGES {
        let o = ok(&fixture_config(), out, &[stage]);
        assert!(stderr(&o).contains("up to date"), "{stage}: {}", stderr(&o));
    }
    assert_eq!(manifest_count(out), before);
    assert_eq!(std::fs::read(out.join("report/stub/leaderboard.txt")).unwrap(), report);
}

#[test]
fn report_before_judge_names_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&fixture_config(), tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("missing upstream artifact"), "{err}");
    assert!(err.contains("judge"), "{err}");

    let o = run(&fixture_config(), tmp.path(), &["summarize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`sample`"));
}

#[test]
fn edited_upstream_output_is_stale() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    ok(&fixture_config(), out, &["sample"]);
    let subsets = out.join("sample/subsets.jsonl");
    let mut text = std::fs::read_to_string(&subsets).unwrap();
    text.push('\n');
    std::fs::write(&subsets, text).unwrap();
    let o = run(&fixture_config(), out, &["summarize"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("stale manifest"));
    assert_eq!(run(&fixture_config(), out, &["validate"]).status.code(), Some(4));
}

#[test]
fn validate_detects_orphans() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    for stage in STAGES {
        ok(&fixture_config(), out, &[stage]);
    }
    ok(&fixture_config(), out, &["validate"]);
    std::fs::write(out.join("report/stub/notes.txt"), "stray").unwrap();
    let o = run(&fixture_config(), out, &["validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("orphan: report/stub/notes.txt"), "{}", stderr(&o));
}

#[test]
fn seed_override_changes_subsets() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&fixture_config(), &a, &["sample"]);
    ok(&fixture_config(), &b, &["--seed", "99", "sample"]);
    assert_ne!(
        std::fs::read(a.join("sample/subsets.jsonl")).unwrap(),
        std::fs::read(b.join("sample/subsets.jsonl")).unwrap()
    );
}

#[test]
fn heatmap_data_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    for stage in ["sample", "summarize", "judge"] {
        ok(&fixture_config(), out, &[stage]);
    }
    ok(&fixture_config(), out, &["report", "--heatmap-data"]);
    let heat = std::fs::read_to_string(out.join("report/stub/heatmap.jsonl")).unwrap();
    assert_eq!(heat.lines().count(), 4);
    assert!(heat.contains("\"topic_label\":\"transport\""));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&fixture_config(), tmp.path(), &["--judge", "oracle", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n").unwrap();
    assert_eq!(run(&cfg, tmp.path(), &["sample"]).status.code(), Some(2));
}

/// Serves `limit` judge requests (one per connection), then stops listening.
fn judge_server(limit: Option<usize>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let served = Arc::new(AtomicUsize::new(0));
    let counter = served.clone();
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let items: Vec<serde_json::Value> = serde_json::from_slice(&body).unwrap();
            assert!(request_line.starts_with("POST /score_batch"));
            let resp: Vec<serde_json::Value> = items
                .iter()
                .map(|_| serde_json::json!({"rep":0.5,"inf":0.25,"neu":1.0,"pol":0.75,"model_version":"t1"}))
                .collect();
            let payload = serde_json::to_vec(&resp).unwrap();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                payload.len()
            )
            .unwrap();
            stream.write_all(&payload).unwrap();
            let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
            if limit == Some(n) {
                break;
            }
        }
    });
    (url, served, handle)
}

fn remote_config(dir: &Path, endpoint: &str) -> PathBuf {
    let fixture = fixture_dir();
    let text = std::fs::read_to_string(fixture_config())
        .unwrap()
        .replace("kind = \"stub\"", &format!("kind = \"remote\"\nendpoint = \"{endpoint}\"\nmax_retries = 0\ntimeout_secs = 5"))
        .replace("max_in_flight = 4", "max_in_flight = 1");
    let text = ["questions", "opinions", "summaries", "annotations"].iter().fold(text, |t, k| {
        t.replace(
            &format!("\"{k}.jsonl\""),
            &format!("\"{}\"", fixture.join(format!("{k}.jsonl")).display()),
        )
    });
    let path = dir.join("remote.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn remote_judge_outage_keeps_completed_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    ok(&fixture_config(), &out, &["sample"]);
    ok(&fixture_config(), &out, &["summarize"]);

    let (url, served, handle) = judge_server(Some(5));
    let config = remote_config(tmp.path(), &url);
    let o = run(&config, &out, &["judge"]);
    handle.join().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("kept for resume"), "{}", stderr(&o));
    let cells = out.join("judge/remote/cells");
    assert_eq!(std::fs::read_dir(&cells).unwrap().count(), 5);
    assert_eq!(served.load(Ordering::SeqCst), 5);
    assert!(!out.join("judge/remote/scores.jsonl").exists());

    // Resume: only the 19 missing cells plus the annotation batch are requested.
    let (url2, served2, _handle2) = judge_server(None);
    let config = remote_config(tmp.path(), &url2);
    let o = run(&config, &out, &["judge"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(served2.load(Ordering::SeqCst), 24 - 5 + 1);
    ok(&config, &out, &["report"]);
    let board = std::fs::read_to_string(out.join("report/remote/leaderboard.txt")).unwrap();
    assert!(board.contains("0.6250"), "{board}");
    ok(&config, &out, &["validate"]);
}
