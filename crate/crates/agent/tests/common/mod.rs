//! Live server on an ephemeral port plus a runner for the agent binary.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use coops_server::{Config, Server};
use serde_json::Value;
use tokio::sync::oneshot;

pub struct LiveServer {
    pub url: String,
    pub data_dir: PathBuf,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl LiveServer {
    /// Starts a server persisting to `data_dir`, with the pro-tip timer off.
    pub fn start(data_dir: &Path) -> Self {
        let config = Config {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            data_dir: Some(data_dir.to_owned()),
            pro_tip_check_secs: 0,
            max_poll_wait_ms: 5_000,
            sync_writes: false,
            ..Config::default()
        };
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let handle = thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().expect("runtime");
            rt.block_on(async move {
                let server = Server::bind(&config).await.expect("bind");
                addr_tx.send(server.local_addr().expect("addr")).expect("report addr");
                server
                    .run(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .expect("serve");
            });
        });
        let addr = addr_rx.recv().expect("server started");
        Self {
            url: format!("http://{addr}"),
            data_dir: data_dir.to_owned(),
            stop: Some(stop_tx),
            handle: Some(handle),
        }
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// One simulated device: a state file driven through the agent binary.
pub struct Agent {
    pub name: String,
    pub state: PathBuf,
}

impl Agent {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            name: name.to_owned(),
            state: dir.join(format!("{}.json", name.to_lowercase())),
        }
    }

    pub fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_coops-agent"))
            .arg("--state")
            .arg(&self.state)
            .args(args)
            .output()
            .expect("spawn agent")
    }

    /// Runs a command that must succeed and returns its stdout.
    pub fn run(&self, args: &[&str]) -> String {
        let out = self.exec(args);
        assert!(
            out.status.success(),
            "{} {:?} failed ({}): {}",
            self.name,
            args,
            out.status,
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).expect("utf-8 output")
    }

    /// Runs a command with `--json` and parses its output.
    pub fn json(&self, args: &[&str]) -> Value {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        let text = self.run(&full);
        serde_json::from_str(&text).unwrap_or_else(|e| panic!("{} {args:?}: bad JSON {e}: {text}", self.name))
    }

    /// `watch --once --json` output, one event per line.
    pub fn events(&self, ack: bool) -> Vec<Value> {
        let mut args = vec!["--json", "watch", "--once", "--wait-ms", "0"];
        if !ack {
            args.push("--no-ack");
        }
        self.run(&args)
            .lines()
            .map(|l| serde_json::from_str(l).expect("event line"))
            .collect()
    }

    /// Runs a command that must fail; returns (exit code, stderr).
    pub fn fail(&self, args: &[&str]) -> (i32, String) {
        let out = self.exec(args);
        assert!(!out.status.success(), "{} {args:?} unexpectedly succeeded", self.name);
        (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
    }

    pub fn state_json(&self) -> Value {
        serde_json::from_str(&std::fs::read_to_string(&self.state).expect("state file")).expect("state JSON")
    }

    pub fn token(&self) -> String {
        self.state_json()["token"].as_str().expect("token").to_owned()
    }

    pub fn member_id(&self) -> String {
        self.state_json()["member_id"].as_str().expect("member id").to_owned()
    }

    pub fn init(&self, server: &str, device: &str, sim: &str, platform: &str) {
        self.run(&[
            "init",
            "--server",
            server,
            "--device-id",
            device,
            "--sim",
            sim,
            "--platform-id",
            platform,
            "--name",
            &self.name,
        ]);
    }
}
