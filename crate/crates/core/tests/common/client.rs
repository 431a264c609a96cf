//! Scripted HTTP rater standing in for the browser UI.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use editqa::seed::fnv1a;
use serde_json::{json, Value};

pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base.into(),
        }
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.expect("GET");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_text(&self, path: &str) -> (u16, String) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.expect("GET");
        (r.status().as_u16(), r.text().await.unwrap())
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .expect("POST");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, subject: &str) -> String {
        let (code, body) = self.post("/sessions", &json!({ "subject_id": subject })).await;
        assert_eq!(code, 201, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    /// Walks the ungated practice phase.
    pub async fn train(&self, id: &str) {
        loop {
            let (_, status) = self.get(&format!("/sessions/{id}")).await;
            if status["state"] != "training" {
                return;
            }
            let (code, view) = self.get(&format!("/sessions/{id}/next")).await;
            assert_eq!(code, 200, "{view}");
            assert_eq!(view["phase"], "training");
            let slot = view["slot_index"].as_u64().unwrap() as usize;
            let (code, ack) = self.rate(id, slot, [50.0; 3]).await;
            assert_eq!(code, 200, "{ack}");
        }
    }

    pub async fn rate(&self, id: &str, slot: usize, s: [f64; 3]) -> (u16, Value) {
        let body = json!({
            "slot_index": slot,
            "video_quality": s[0],
            "editing_alignment": s[1],
            "structural_consistency": s[2],
        });
        self.post(&format!("/sessions/{id}/ratings"), &body).await
    }

    /// Scores up to `limit` scoring slots; returns the acknowledged
    /// `(slot, item, scores)` triples.
    pub async fn score(&self, id: &str, limit: usize) -> Vec<(usize, String, [f64; 3])> {
        let mut acked = Vec::new();
        while acked.len() < limit {
            let (code, view) = self.get(&format!("/sessions/{id}/next")).await;
            if code == 409 {
                break;
            }
            assert_eq!(code, 200, "{view}");
            assert_eq!(view["phase"], "scoring");
            assert!(view.get("is_repeat").is_none() && view.get("original_slot").is_none());
            let slot = view["slot_index"].as_u64().unwrap() as usize;
            let item = view["item_id"].as_str().unwrap().to_string();
            let scores = rater_scores(&item, slot);
            let (code, ack) = self.rate(id, slot, scores).await;
            assert_eq!(code, 200, "{ack}");
            assert_eq!(ack["accepted"], true);
            acked.push((slot, item, scores));
        }
        acked
    }
}

/// A consistent rater: item-driven score with a small slot-dependent wobble.
pub fn rater_scores(item: &str, slot: usize) -> [f64; 3] {
    let h = fnv1a(item.as_bytes());
    let wobble = (slot % 5) as f64 * 0.5;
    [0u64, 1, 2].map(|d| ((h >> (8 * d)) % 80) as f64 + 10.0 + wobble)
}

/// The service binary as a child process.
pub struct ServerProcess {
    child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn spawn(cwd: &Path, manifest: &Path, calibration: &Path, log: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_editqa"))
            .args(["serve", "--manifest"])
            .arg(manifest)
            .arg("--calibration")
            .arg(calibration)
            .arg("--log")
            .arg(log)
            .env(editqa::session::server::LISTEN_ENV, "127.0.0.1:0")
            .env("RUST_LOG", "warn")
            .current_dir(cwd)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn editqa serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner `{line}`"));
        Self {
            base: format!("http://{addr}"),
            child,
        }
    }

    /// SIGKILL: no shutdown path runs.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    /// SIGTERM and wait for a clean exit.
    pub fn terminate(mut self) -> std::process::ExitStatus {
        let pid = self.child.id().to_string();
        Command::new("kill").args(["-TERM", &pid]).status().unwrap();
        self.child.wait().unwrap()
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
