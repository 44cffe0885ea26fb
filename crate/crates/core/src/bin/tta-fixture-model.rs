//! Line-protocol test double. Reads requests on stdin and answers according to
//! the mode given as the first argument:
//!
//! * `echo`     stress = strain
//! * `short`    drops the last step
//! * `nan`      writes a NaN literal in the first step
//! * `bad-id`   answers with the wrong id
//! * `garbage`  writes a line that is not JSON
//! * `exit`     exits without answering
//! * `sleep`    never answers
//! * `oracle`   equivariant oracle with default parameters

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};
use tta_core::surrogate::{equivariant_oracle, ModelInput, OracleParams};
use tta_core::tensor::{OrientationTensor, SymTensor3, TensorPath};

fn rows(v: &Value) -> Vec<[f64; 6]> {
    serde_json::from_value(v.clone()).expect("eps rows")
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "echo".into());
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line.expect("stdin");
        let req: Value = serde_json::from_str(&line).expect("request json");
        let id = req["id"].as_u64().expect("id");
        let eps = rows(&req["eps"]);
        let reply = match mode.as_str() {
            "echo" => json!({"id": id, "sigma": eps}).to_string(),
            "short" => json!({"id": id, "sigma": &eps[..eps.len() - 1]}).to_string(),
            "nan" => {
                let tail = json!(&eps[1..]).to_string();
                let rest = if eps.len() > 1 { format!(",{}", &tail[1..tail.len() - 1]) } else { String::new() };
                format!("{{\"id\":{id},\"sigma\":[[NaN,0,0,0,0,0]{rest}]}}")
            }
            "bad-id" => json!({"id": id + 1, "sigma": eps}).to_string(),
            "garbage" => "this is not json".to_string(),
            "exit" => std::process::exit(0),
            "sleep" => loop {
                std::thread::sleep(std::time::Duration::from_secs(60));
            },
            "oracle" => {
                let a: [f64; 6] = serde_json::from_value(req["a"].clone()).expect("a");
                let input = ModelInput::new(
                    OrientationTensor::new(SymTensor3::new(a)).expect("orientation"),
                    req["vf"].as_f64().expect("vf"),
                    TensorPath::new(eps.into_iter().map(SymTensor3::new).collect()).expect("path"),
                )
                .expect("input");
                let out = equivariant_oracle(&OracleParams::default(), &input);
                let sigma: Vec<_> = out.stress.iter().map(|s| *s.components()).collect();
                json!({"id": id, "sigma": sigma}).to_string()
            }
            other => panic!("unknown fixture mode {other}"),
        };
        writeln!(out, "{reply}").expect("stdout");
        out.flush().expect("flush");
    }
}
