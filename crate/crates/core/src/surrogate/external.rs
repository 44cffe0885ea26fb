//! Newline-delimited JSON adapter for models running in a child process.
//!
//! Request, one line on the child's stdin:
//! `{"id": <u64>, "a": [6 floats], "vf": <float>, "eps": [[6 floats] × T]}`
//!
//! Response, one line on its stdout:
//! `{"id": <u64>, "sigma": [[6 floats] × T]}`
//!
//! Components are ordered `[11, 22, 33, 12, 13, 23]` and shear slots carry
//! tensor (not engineering) values. Each child serves one request at a time;
//! a pool of children serves concurrent callers.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelInput, ModelOutput};
use crate::tensor::{SymTensor3, TensorPath};

#[derive(Debug, Error)]
pub enum ExternalModelError {
    #[error("failed to spawn `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("external model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("external model exited before answering request {id}")]
    Exited { id: u64 },
    #[error("malformed response line ({reason}): {line}")]
    Malformed { reason: String, line: String },
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("response has {got} steps, request had {expected}")]
    Length { expected: usize, got: usize },
    #[error("response contains non-finite stress at step {step}")]
    NonFinite { step: usize },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("no external model worker is alive")]
    NoWorkers,
    #[error("empty command line")]
    EmptyCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModelConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_workers() -> usize {
    1
}

impl ExternalModelConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalModelConfig { command, timeout_ms: default_timeout_ms(), workers: default_workers() }
    }

    /// Splits a command line on whitespace. No shell quoting is interpreted.
    pub fn from_command_line(line: &str) -> Result<Self, ExternalModelError> {
        let command: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if command.is_empty() {
            return Err(ExternalModelError::EmptyCommand);
        }
        Ok(Self::new(command))
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    a: &'a [f64; 6],
    vf: f64,
    eps: Vec<&'a [f64; 6]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    id: u64,
    sigma: Vec<[f64; 6]>,
}

pub fn encode_request(id: u64, input: &ModelInput) -> String {
    let req = Request {
        id,
        a: input.a.tensor().components(),
        vf: input.vf,
        eps: input.strain.iter().map(SymTensor3::components).collect(),
    };
    serde_json::to_string(&req).expect("request serialization cannot fail")
}

/// Parses and validates one response line against the request it answers.
pub fn decode_response(line: &str, expected_id: u64, expected_len: usize) -> Result<ModelOutput, ExternalModelError> {
    let resp: Response = serde_json::from_str(line).map_err(|e| {
        // Python's json module writes NaN/Infinity literals, which are not JSON
        if line.contains("NaN") || line.contains("Infinity") {
            ExternalModelError::NonFinite { step: non_finite_step(line) }
        } else {
            ExternalModelError::Malformed { reason: e.to_string(), line: truncate(line) }
        }
    })?;
    if resp.id != expected_id {
        return Err(ExternalModelError::IdMismatch { expected: expected_id, got: resp.id });
    }
    if resp.sigma.len() != expected_len {
        return Err(ExternalModelError::Length { expected: expected_len, got: resp.sigma.len() });
    }
    if let Some(step) = resp.sigma.iter().position(|row| row.iter().any(|x| !x.is_finite())) {
        return Err(ExternalModelError::NonFinite { step });
    }
    let steps = resp.sigma.into_iter().map(SymTensor3::new).collect();
    Ok(ModelOutput { stress: TensorPath::new(steps).map_err(|_| ExternalModelError::Length { expected: expected_len, got: 0 })? })
}

fn non_finite_step(line: &str) -> usize {
    // best effort: count completed rows before the first offending token
    let pos = ["NaN", "Infinity"].iter().filter_map(|t| line.find(t)).min().unwrap_or(0);
    let sigma = line.find("\"sigma\"").unwrap_or(0);
    if pos < sigma {
        return 0;
    }
    line[sigma..pos].matches(']').count()
}

fn truncate(line: &str) -> String {
    const MAX: usize = 200;
    if line.len() <= MAX {
        line.to_owned()
    } else {
        let mut end = MAX;
        while !line.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &line[..end])
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Worker {
    fn spawn(config: &ExternalModelConfig) -> Result<Self, ExternalModelError> {
        let (program, args) = config.command.split_first().ok_or(ExternalModelError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ExternalModelError::Spawn { command: config.command.join(" "), source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Worker { child, stdin, lines: rx, next_id: 0 })
    }

    fn call(&mut self, input: &ModelInput, timeout: Duration) -> Result<ModelOutput, ExternalModelError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = encode_request(id, input);
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe => ExternalModelError::Exited { id },
            _ => ExternalModelError::Io(e),
        })?;
        self.stdin.flush()?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(ExternalModelError::Io(e)),
            Err(RecvTimeoutError::Timeout) => return Err(ExternalModelError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(ExternalModelError::Exited { id }),
        };
        decode_response(&reply, id, input.len())
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Pool {
    idle: Vec<Worker>,
    alive: usize,
}

/// Pool of child processes speaking the line protocol. A worker that fails a
/// request is killed and replaced, since its stream position is unknown.
pub struct ExternalModel {
    config: ExternalModelConfig,
    pool: Mutex<Pool>,
    ready: Condvar,
}

impl ExternalModel {
    pub fn spawn(config: ExternalModelConfig) -> Result<Self, ExternalModelError> {
        let n = config.workers.max(1);
        let idle = (0..n).map(|_| Worker::spawn(&config)).collect::<Result<Vec<_>, _>>()?;
        Ok(ExternalModel { config, pool: Mutex::new(Pool { idle, alive: n }), ready: Condvar::new() })
    }

    pub fn config(&self) -> &ExternalModelConfig {
        &self.config
    }

    pub fn predict(&self, input: &ModelInput) -> Result<ModelOutput, ExternalModelError> {
        let mut worker = self.checkout()?;
        let result = worker.call(input, self.config.timeout());
        match result {
            Ok(out) => {
                self.checkin(Some(worker));
                Ok(out)
            }
            Err(e) => {
                drop(worker);
                let replacement = Worker::spawn(&self.config).ok();
                if replacement.is_none() {
                    log::warn!("could not respawn external model worker after: {e}");
                }
                self.checkin(replacement);
                Err(e)
            }
        }
    }

    fn checkout(&self) -> Result<Worker, ExternalModelError> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(w) = pool.idle.pop() {
                return Ok(w);
            }
            if pool.alive == 0 {
                return Err(ExternalModelError::NoWorkers);
            }
            pool = self.ready.wait(pool).expect("pool lock");
        }
    }

    fn checkin(&self, worker: Option<Worker>) {
        let mut pool = self.pool.lock().expect("pool lock");
        match worker {
            Some(w) => pool.idle.push(w),
            None => pool.alive -= 1,
        }
        self.ready.notify_all();
    }
}

/// Convenience wrapper: one-off request against a fresh process.
pub fn external_predict(config: &ExternalModelConfig, input: &ModelInput) -> Result<ModelOutput, ExternalModelError> {
    let mut worker = Worker::spawn(config)?;
    worker.call(input, config.timeout())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::OrientationTensor;

    fn sample_input(t: usize) -> ModelInput {
        let steps = (0..t).map(|k| SymTensor3::new([0.1 * k as f64, 0.0, 0.0, 0.25, 0.0, -1.5])).collect();
        ModelInput::new(OrientationTensor::isotropic(), 0.125, TensorPath::new(steps).unwrap()).unwrap()
    }

    #[test]
    fn request_wire_format() {
        let line = encode_request(7, &sample_input(2));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["id"], 7);
        assert_eq!(v["vf"], 0.125);
        assert_eq!(v["a"].as_array().unwrap().len(), 6);
        assert_eq!(v["eps"][1], serde_json::json!([0.1, 0.0, 0.0, 0.25, 0.0, -1.5]));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn response_validation() {
        let ok = r#"{"id":3,"sigma":[[1,2,3,4,5,6],[0,0,0,0,0,0]]}"#;
        let out = decode_response(ok, 3, 2).unwrap();
        assert_eq!(out.stress[0], SymTensor3::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert!(matches!(decode_response(ok, 4, 2), Err(ExternalModelError::IdMismatch { expected: 4, got: 3 })));
        assert!(matches!(decode_response(ok, 3, 3), Err(ExternalModelError::Length { expected: 3, got: 2 })));
        let nan = r#"{"id":3,"sigma":[[1,2,3,4,5,6],[0,NaN,0,0,0,0]]}"#;
        assert!(matches!(decode_response(nan, 3, 2), Err(ExternalModelError::NonFinite { step: 1 })));
        let short_row = r#"{"id":3,"sigma":[[1,2,3,4,5]]}"#;
        assert!(matches!(decode_response(short_row, 3, 1), Err(ExternalModelError::Malformed { .. })));
        assert!(matches!(decode_response("garbage", 0, 1), Err(ExternalModelError::Malformed { .. })));
    }

    #[test]
    fn command_line_split() {
        let c = ExternalModelConfig::from_command_line("  python3 model.py --fast ").unwrap();
        assert_eq!(c.command, vec!["python3", "model.py", "--fast"]);
        assert!(ExternalModelConfig::from_command_line("   ").is_err());
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let cfg = ExternalModelConfig::new(vec!["/nonexistent/tta-model-binary".into()]);
        assert!(matches!(ExternalModel::spawn(cfg), Err(ExternalModelError::Spawn { .. })));
    }
}
