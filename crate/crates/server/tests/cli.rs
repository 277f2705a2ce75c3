use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_plastiscope");

/// Ceiling for the default synthetic dataset on disk.
const DEFAULT_SYNTH_MAX_BYTES: u64 = 158_000_000;

fn plastiscope(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PLASTISCOPE_STORE").env_remove("PLASTISCOPE_PORT").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = plastiscope(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_store(dir: &Path) -> PathBuf {
    let raw = dir.join("raw");
    let store = dir.join("store");
    ok(&["synth", "--clusters", "12", "--areas", "3", "--timesteps", "5", "--output", s(&raw)]);
    ok(&["preprocess", "--input", s(&raw), "--output", s(&store)]);
    store
}

fn dir_bytes(path: &Path) -> u64 {
    std::fs::read_dir(path)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() { dir_bytes(&p) } else { p.metadata().unwrap().len() }
        })
        .sum()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut text = String::new();
    stream.read_to_string(&mut text).ok()?;
    Some(text)
}

fn wait_ready(child: &mut Child, port: u16) -> String {
    let deadline = Instant::now() + Duration::from_secs(30);
    while Instant::now() < deadline {
        if let Some(resp) = http_get(port, "/api/catalog") {
            return resp;
        }
        assert!(child.try_wait().unwrap().is_none(), "server exited early");
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("server never came up on {port}");
}

fn wait_exit(child: &mut Child) -> std::process::ExitStatus {
    let deadline = Instant::now() + Duration::from_secs(15);
    while Instant::now() < deadline {
        if let Some(status) = child.try_wait().unwrap() {
            return status;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().unwrap();
    panic!("server ignored the signal");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("raw");
    for args in [
        vec!["synth", "--clusters", "0", "--output", s(&out)],
        vec!["synth", "--timesteps", "0", "--output", s(&out)],
        vec!["synth", "--clusters", "4", "--areas", "5", "--output", s(&out)],
        vec!["synth"],
        vec!["preprocess", "--input", "x", "--output", "y", "--scenarios", "learning,bogus"],
        vec!["serve", "--store", "x", "--port", "70000"],
        vec!["frobnicate"],
    ] {
        let result = plastiscope(&args);
        assert_eq!(result.status.code(), Some(2), "{args:?}");
        assert!(!result.stderr.is_empty());
    }
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let result = plastiscope(&["serve", "--store", s(dir.path()), "--port", "0"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("no catalog"));

    let result = plastiscope(&["preprocess", "--input", s(&dir.path().join("absent")), "--output", s(&dir.path().join("o"))]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).starts_with("error: "));
}

#[test]
fn synth_is_reproducible_and_preprocess_selects_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["synth", "--clusters", "10", "--areas", "2", "--timesteps", "4", "--seed", "5", "--output", s(out)]);
    }
    let listing = |root: &Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    assert!(listing(&a) == listing(&b));

    let store = dir.path().join("store");
    let stdout = ok(&["preprocess", "--input", s(&a), "--output", s(&store), "--scenarios", "learning", "--jobs", "1"]);
    assert!(stdout.contains("total: 4 frames"), "{stdout}");
    assert!(store.join("learning").is_dir());
    assert!(!store.join("injury").exists());

    let summary = ok(&["inspect", "--store", s(&store), "learning", "3"]);
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["neurons"], 100);
    assert_eq!(v["timestep"], 3);
}

#[test]
fn default_synth_fits_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let stdout = ok(&["synth", "--output", s(&raw)]);
    assert!(stdout.contains("5000 neurons x 100 steps"), "{stdout}");
    let bytes = dir_bytes(&raw);
    assert!(bytes < DEFAULT_SYNTH_MAX_BYTES, "{bytes} B");
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let store = small_store(dir.path());
    let port = free_port();
    let mut child = Command::new(BIN)
        .args(["serve", "--store", s(&store), "--port", &port.to_string()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let resp = wait_ready(&mut child, port);
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"neuron_count\":120"));
    let missing = http_get(port, "/api/frame/learning/99").unwrap();
    assert!(missing.starts_with("HTTP/1.1 404"));

    let sent = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(sent.success());
    assert_eq!(wait_exit(&mut child).code(), Some(0));
}

#[cfg(unix)]
#[test]
fn serve_reads_store_and_port_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let store = small_store(dir.path());
    let port = free_port();
    let mut child = Command::new(BIN)
        .arg("serve")
        .env("PLASTISCOPE_STORE", &store)
        .env("PLASTISCOPE_PORT", port.to_string())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    wait_ready(&mut child, port);
    let sent = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(sent.success());
    assert_eq!(wait_exit(&mut child).code(), Some(0));
}

#[test]
fn busy_port_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let store = small_store(dir.path());
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let out = plastiscope(&["serve", "--store", s(&store), "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("binding"));
}
