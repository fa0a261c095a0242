//! End-to-end tests for the `fedshap` binary: exit codes, artifact
//! layout, determinism, and transport independence on a small corpus.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fedshap")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should spawn")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

/// Generates a small corpus and trains into `dir/run`, returning the id
/// of the first test-split instance.
fn setup(dir: &Path) -> u64 {
    let out = run_in(
        dir,
        &[
            "sample-data",
            "--out",
            "census.csv",
            "--rows",
            "400",
            "--seed",
            "7",
        ],
    );
    assert_ok(&out);
    let out = run_in(dir, &["train", "--data", "census.csv", "--out", "run"]);
    assert_ok(&out);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/split.json")).unwrap())
            .unwrap();
    let row = manifest["test_indices"][0].as_u64().unwrap() as usize;

    // Ids are the original data-line numbers; lines with "?" are dropped
    // at load time, so map the dataset row back through the usable lines.
    let text = std::fs::read_to_string(dir.join("census.csv")).unwrap();
    text.lines()
        .skip(1)
        .enumerate()
        .filter(|(_, l)| !l.split(',').any(|f| f.trim() == "?"))
        .map(|(i, _)| i as u64)
        .nth(row)
        .unwrap()
}

fn report_rows(path: &Path) -> Vec<(String, f64, f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("player,attribution,base_value,full_value")
    );
    lines
        .map(|l| {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(l.as_bytes());
            let rec = rdr.records().next().unwrap().unwrap();
            (
                rec[0].to_string(),
                rec[1].parse().unwrap(),
                rec[2].parse().unwrap(),
                rec[3].parse().unwrap(),
            )
        })
        .collect()
}

struct GuestChild {
    child: Child,
    addr: String,
    reader: Option<BufReader<std::process::ChildStdout>>,
}

impl GuestChild {
    fn spawn(dir: &Path, config: &Path) -> GuestChild {
        let mut child = Command::new(bin())
            .args(["guest", "--config"])
            .arg(config)
            .current_dir(dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("guest should spawn");
        let stdout = child.stdout.take().unwrap();
        let mut reader = BufReader::new(stdout);
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let addr = line
            .strip_prefix("guest listening on ")
            .unwrap_or_else(|| panic!("unexpected guest banner: {line:?}"))
            .split_whitespace()
            .next()
            .unwrap()
            .to_string();
        GuestChild {
            child,
            addr,
            reader: Some(reader),
        }
    }

    /// Kills the guest and returns every log line it printed after the
    /// banner.
    fn finish(mut self) -> Vec<String> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let mut lines = Vec::new();
        if let Some(reader) = self.reader.take() {
            for line in reader.lines().map_while(|l| l.ok()) {
                lines.push(line);
            }
        }
        lines
    }
}

impl Drop for GuestChild {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn end_to_end_full_and_federated_reports() {
    let dir = tempfile::tempdir().unwrap();
    let id = setup(dir.path());
    let id_arg = id.to_string();

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "full",
            "--instance",
            &id_arg,
        ],
    );
    assert_ok(&out);
    let full = report_rows(&dir.path().join(format!("run/report_full_{id}.csv")));
    assert_eq!(full.len(), 12);

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated3",
            "--instance",
            &id_arg,
        ],
    );
    assert_ok(&out);
    let fed = report_rows(&dir.path().join(format!("run/report_federated3_{id}.csv")));
    assert_eq!(fed.len(), 10);
    assert_eq!(fed.last().unwrap().0, "federated");

    // Shared baseline: both games span reference -> instance, so the
    // attribution totals agree through the efficiency property.
    let (full_sum, fed_sum): (f64, f64) = (
        full.iter().map(|r| r.1).sum(),
        fed.iter().map(|r| r.1).sum(),
    );
    assert!((full[0].2 - fed[0].2).abs() < 1e-9, "base values diverge");
    assert!((full_sum - (full[0].3 - full[0].2)).abs() < 1e-9);
    assert!((fed_sum - (fed[0].3 - fed[0].2)).abs() < 1e-9);
    assert!((full_sum - fed_sum).abs() < 1e-9);

    // Bar file covers the same players, largest magnitude first.
    let bar =
        std::fs::read_to_string(dir.path().join(format!("run/report_full_{id}_bar.csv"))).unwrap();
    assert_eq!(bar.lines().count(), 13);
    assert_eq!(bar.lines().next(), Some("player,attribution"));
}

#[test]
fn explain_accepts_row_and_id_selectors() {
    let dir = tempfile::tempdir().unwrap();
    let id = setup(dir.path());

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated5",
            "--instance",
            "row:0",
        ],
    );
    assert_ok(&out);
    let by_row = std::fs::read(dir.path().join(format!("run/report_federated5_{id}.csv"))).unwrap();

    let explicit = format!("id:{id}");
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated5",
            "--instance",
            &explicit,
        ],
    );
    assert_ok(&out);
    let by_id = std::fs::read(dir.path().join(format!("run/report_federated5_{id}.csv"))).unwrap();
    assert_eq!(by_row, by_id);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let id = setup(dir.path());
    let id_arg = id.to_string();

    let manifest1 = std::fs::read(dir.path().join("run/split.json")).unwrap();
    let snapshot1 = std::fs::read(dir.path().join("run/model.snapshot")).unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--data", "census.csv", "--out", "run2"],
    );
    assert_ok(&out);
    assert_eq!(
        manifest1,
        std::fs::read(dir.path().join("run2/split.json")).unwrap()
    );
    assert_eq!(
        snapshot1,
        std::fs::read(dir.path().join("run2/model.snapshot")).unwrap()
    );

    let args = [
        "explain",
        "--data",
        "census.csv",
        "--out",
        "run",
        "--mode",
        "federated3",
        "--instance",
        id_arg.as_str(),
    ];
    let out = run_in(dir.path(), &args);
    assert_ok(&out);
    let report_path = dir.path().join(format!("run/report_federated3_{id}.csv"));
    let first = std::fs::read(&report_path).unwrap();
    let out = run_in(dir.path(), &args);
    assert_ok(&out);
    assert_eq!(first, std::fs::read(&report_path).unwrap());
}

#[test]
fn batch_writes_scatter_and_bar() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());

    let out = run_in(
        dir.path(),
        &[
            "batch",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated3",
            "--sample",
            "2",
        ],
    );
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("mean spearman rho"),
        "missing rank-agreement summary in: {stdout}"
    );

    let scatter = std::fs::read_to_string(dir.path().join("run/scatter_federated3.csv")).unwrap();
    let mut instances: Vec<&str> = scatter
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    instances.dedup();
    assert_eq!(instances.len(), 2, "expected 2 instance groups");
    assert_eq!(scatter.lines().count(), 1 + 2 * 10);

    let bar = std::fs::read_to_string(dir.path().join("run/bar_federated3.csv")).unwrap();
    assert_eq!(bar.lines().count(), 11);
    assert_eq!(bar.lines().next(), Some("player,mean_attribution"));
}

fn write_guest_config(dir: &Path) -> PathBuf {
    let path = dir.join("guest.toml");
    std::fs::write(
        &path,
        "data = \"census.csv\"\nbind = \"127.0.0.1:0\"\nmode = \"federated3\"\nkey = \"integration-key\"\n",
    )
    .unwrap();
    path
}

fn write_run_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "data = \"census.csv\"\nkey = \"integration-key\"\nmode = \"federated3\"\nout = \"run\"\n",
    )
    .unwrap();
    path
}

#[test]
fn tcp_and_inproc_reports_are_identical_and_guest_log_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let id = setup(dir.path());
    let id_arg = id.to_string();
    let run_config = write_run_config(dir.path());
    let guest_config = write_guest_config(dir.path());
    let report_path = dir.path().join(format!("run/report_federated3_{id}.csv"));

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--config",
            run_config.to_str().unwrap(),
            "--instance",
            &id_arg,
        ],
    );
    assert_ok(&out);
    let inproc_report = std::fs::read(&report_path).unwrap();
    std::fs::remove_file(&report_path).unwrap();

    let guest = GuestChild::spawn(dir.path(), &guest_config);
    let transport = format!("tcp:{}", guest.addr);
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--config",
            run_config.to_str().unwrap(),
            "--transport",
            &transport,
            "--instance",
            &id_arg,
        ],
    );
    assert_ok(&out);
    let tcp_report = std::fs::read(&report_path).unwrap();
    assert_eq!(inproc_report, tcp_report, "transport changed the report");

    let log = guest.finish();
    assert!(!log.is_empty(), "guest printed no session log");
    for line in &log {
        assert!(
            line.starts_with("session "),
            "unexpected guest log line: {line}"
        );
        let rest = &line["session ".len()..];
        let (sid, rest) = rest.split_at(16);
        assert!(
            sid.chars().all(|c| c.is_ascii_hexdigit()),
            "bad line: {line}"
        );
        let rest = rest.trim_start();
        let shape_ok = rest == "bye"
            || rest.starts_with("hello version ")
            || rest.starts_with("partial token=special_off rows=")
            || rest.starts_with("partial token=pseudonym:");
        assert!(shape_ok, "log line outside vocabulary: {line}");
        assert!(
            !rest.contains('.'),
            "guest log may be leaking a value: {line}"
        );
    }
}

#[test]
fn missing_data_exits_2_with_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--data", "absent.csv", "--out", "run"],
    );
    assert_eq!(code(&out), 2);
    assert!(
        !dir.path().join("run").exists(),
        "failed train left outputs behind"
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "x.csv",
            "--mode",
            "medium",
            "--instance",
            "1",
        ],
    );
    assert_eq!(code(&out), 1);

    let out = run_in(
        dir.path(),
        &["explain", "--data", "x.csv", "--instance", "seven"],
    );
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["batch", "--data", "x.csv", "--sample", "0"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn unreachable_guest_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let id = setup(dir.path());
    let id_arg = id.to_string();

    // Nothing listens on this port: connect is refused.
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated3",
            "--transport",
            "tcp:127.0.0.1:9",
            "--instance",
            &id_arg,
        ],
    );
    assert_eq!(
        code(&out),
        3,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // A guest that dies mid-session: the listener accepts, then hangs up.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        drop(stream);
    });
    let transport = format!("tcp:{addr}");
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "federated3",
            "--transport",
            &transport,
            "--instance",
            &id_arg,
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("channel"),
        "stderr should mention the channel failure: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    server.join().unwrap();
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let config = dir.path().join("cfg.toml");
    std::fs::write(
        &config,
        "data = \"absent.csv\"\nmode = \"federated3\"\nout = \"run\"\n",
    )
    .unwrap();

    // Config alone points at a missing file; the flag fixes it.
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--config",
            config.to_str().unwrap(),
            "--data",
            "census.csv",
            "--instance",
            "row:0",
        ],
    );
    assert_ok(&out);

    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--config",
            config.to_str().unwrap(),
            "--instance",
            "row:0",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "explain",
            "--data",
            "census.csv",
            "--out",
            "run",
            "--mode",
            "full",
            "--instance",
            "999999",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}
