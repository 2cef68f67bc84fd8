use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn oculus() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oculus"));
    c.env_remove("OCULUS_RULEBASE");
    c
}

fn run(args: &[&str]) -> Output {
    oculus().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A port whose successor is free too, for the bridge.
fn free_port_pair() -> u16 {
    loop {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = l.local_addr().unwrap().port();
        if port < 65535 && TcpListener::bind(("127.0.0.1", port + 1)).is_ok() {
            return port;
        }
    }
}

struct Server {
    child: Child,
    log: PathBuf,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(port: u16, robots: &str, out: &Path) -> Server {
    let mut child = oculus()
        .args([
            "serve",
            "--port",
            &port.to_string(),
            "--robots",
            robots,
            "--out",
        ])
        .arg(out)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    assert!(line.starts_with("listening on"), "{line}");
    let log = PathBuf::from(line.trim().rsplit("log ").next().unwrap());
    Server { child, log }
}

fn count(log: &str, kind: &str) -> usize {
    log.lines()
        .filter(|l| l.contains(&format!("\"type\":\"{kind}\"")))
        .count()
}

fn wait_for_log(path: &Path, pose_commands: usize) -> String {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let text = std::fs::read_to_string(path).unwrap_or_default();
        if count(&text, "POSE.COMMAND") >= pose_commands || Instant::now() > deadline {
            // let any stragglers land before counting
            std::thread::sleep(Duration::from_millis(200));
            return std::fs::read_to_string(path).unwrap_or_default();
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn serve_fans_out_one_recommendation() {
    for (robots, n) in [("5", 5), ("1", 1)] {
        let dir = tempfile::tempdir().unwrap();
        let port = free_port_pair();
        let server = serve(port, robots, dir.path());
        let o = run(&[
            "inject",
            "--port",
            &port.to_string(),
            "--priority",
            "6",
            "--item",
            "book-1",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let log = wait_for_log(&server.log, n);
        assert_eq!(count(&log, "EVENT.RECOMMENDATION"), 1, "{log}");
        assert_eq!(count(&log, "STATE.UPDATE"), n, "{log}");
        assert_eq!(count(&log, "POSE.COMMAND"), n, "{log}");
        assert_eq!(count(&log, "ERROR"), 0, "{log}");
    }
}

#[test]
fn serve_reports_busy_port() {
    let port = free_port_pair();
    let _held = TcpListener::bind(("127.0.0.1", port)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = oculus()
        .args(["serve", "--port", &port.to_string(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn serve_rejects_bad_rule_base_before_listening() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"inputs": {}, "outputs": {}, "rules": []}"#).unwrap();
    let port = free_port_pair();
    let o = oculus()
        .args(["serve", "--port", &port.to_string(), "--out"])
        .arg(dir.path())
        .env("OCULUS_RULEBASE", &bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(TcpListener::bind(("127.0.0.1", port)).is_ok());
    // no session log was opened
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

    let missing = run(&[
        "serve",
        "--port",
        &port.to_string(),
        "--rulebase",
        "/nonexistent/rules.json",
    ]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn experiment_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = oculus()
            .args([
                "experiment",
                "--synthetic",
                "--seed",
                "7",
                "--subject",
                "s01",
                "--out",
            ])
            .arg(d.path())
            .output()
            .unwrap();
        assert!(o.status.success());
        assert!(stdout(&o).contains("20 records, aborted: false"));
    }
    for name in [
        "s01-7.csv",
        "s01-7.jsonl",
        "s01-7.meta.json",
        "s01-7.summary.csv",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let csv = std::fs::read_to_string(a.path().join("s01-7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn experiment_usage_errors() {
    assert_eq!(
        run(&["experiment", "--synthetic", "--seed", "7"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        run(&["experiment", "--subject", "a/b", "--synthetic"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        run(&[
            "experiment",
            "--subject",
            "x",
            "--synthetic",
            "--duration-ms",
            "5"
        ])
        .status
        .code(),
        Some(64)
    );
    assert_eq!(run(&["nonsense"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn console_session_aborts_on_closed_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = oculus()
        .args(["experiment", "--seed", "3", "--subject", "p9", "--out"])
        .arg(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        use std::io::Write;
        let mut stdin = child.stdin.take().unwrap();
        stdin.write_all(b"6\n2\n").unwrap();
    }
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).contains("2 records, aborted: true"),
        "{}",
        stdout(&o)
    );
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p9-3.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["aborted"], true);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("p9-3.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn pose_traces() {
    let o = run(&["pose-trace", "--from", "0,0", "--to", "0,0"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows
        .iter()
        .all(|r| r.split_once(',').unwrap().1 == "0.5,0.5,0,0,0"));

    let o = run(&[
        "pose-trace",
        "--to",
        "0,200",
        "--duration-ms",
        "800",
        "--rate-hz",
        "50",
    ]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "time_ms,lid_left,lid_right,yaw_left,yaw_right,pitch"
    );
    assert_eq!(lines.len(), 42);
    assert_eq!(lines[41], "800,1,1,0,0,0");

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.csv");
    let o = oculus()
        .args([
            "pose-trace",
            "--from",
            "-200,-150",
            "--to",
            "200,150",
            "--out",
        ])
        .arg(&file)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 42);

    for bad in [["--to", "0,201"], ["--from", "-250,0"]] {
        let mut args = vec!["pose-trace", "--to", "0,0"];
        args.extend(bad);
        assert_eq!(run(&args).status.code(), Some(64), "{bad:?}");
    }
    assert_eq!(
        run(&["pose-trace", "--to", "0,0", "--rate-hz", "0"])
            .status
            .code(),
        Some(64)
    );
}

#[test]
fn inject_without_bus() {
    let port = free_port_pair();
    assert_eq!(
        run(&["inject", "--port", &port.to_string(), "--priority", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["inject", "--port", &port.to_string(), "--priority", "7"])
            .status
            .code(),
        Some(64)
    );
}

#[test]
fn remote_console_grades_a_session() {
    use oculus_core::bus::tcp::BusClient;
    use oculus_core::bus::{MessageType, PoseCommandPayload, RatingPayload};

    let dir = tempfile::tempdir().unwrap();
    let port = free_port_pair();
    let child = oculus()
        .args([
            "experiment",
            "--remote",
            "--seed",
            "11",
            "--subject",
            "r1",
            "--timeout-ms",
            "5000",
        ])
        .args(["--port", &port.to_string(), "--out"])
        .arg(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    let mut ui = loop {
        match BusClient::connect(("127.0.0.1", port), "console", &[MessageType::PoseCommand]) {
            Ok(c) => break c,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("{e}"),
        }
    };
    // the first stimulus may have gone out before the subscription existed
    let mut next = 0;
    while next < 20 {
        let cmd = ui.recv(Duration::from_millis(300)).unwrap();
        let trial = match cmd {
            Some(m) => m
                .decode::<PoseCommandPayload>()
                .unwrap()
                .trial_index
                .unwrap(),
            None => next,
        };
        if trial < next {
            continue;
        }
        ui.send(
            MessageType::RatingSubmit,
            RatingPayload {
                trial_index: trial,
                grade: 1 + (trial % 6) as u8,
                session_id: Some("r1-11".into()),
            },
        )
        .unwrap();
        next = trial + 1;
    }
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("20 records, aborted: false"),
        "{}",
        stdout(&o)
    );
    let jsonl = std::fs::read_to_string(dir.path().join("r1-11.jsonl")).unwrap();
    for (i, line) in jsonl.lines().enumerate() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["trial_index"], i);
        assert_eq!(r["grade"], 1 + (i % 6));
    }
}
