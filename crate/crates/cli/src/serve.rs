//! Newline-delimited JSON scoring protocol over TCP or stdin/stdout.
//!
//! Request: `{"text": "..."}` or `{"embedding": "<base64 EMB1 stream, one record>"}`,
//! with an optional `"id"` echoed back. Response:
//! `{"verdict": "in-scope"|"oos", "intent": <label or "oos">, "d_min": .., "tau": ..}`
//! or `{"error": ".."}`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use oosguard::data::{decode_emb, encode_emb, EmbRecord, Label};
use oosguard::{decide, Query, Scorer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Request {
    #[serde(default)]
    id: Option<Value>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    embedding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub verdict: String,
    pub intent: String,
    pub d_min: f64,
    pub tau: f64,
}

#[derive(Debug, Serialize)]
struct ErrorResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<Value>,
    error: String,
}

/// Base64 of a one-record EMB1 stream, as expected in the `embedding` field.
pub fn encode_embedding(values: &[f32]) -> oosguard::Result<String> {
    let bytes = encode_emb(
        values.len(),
        &[EmbRecord {
            label: Label::Oos,
            values: values.to_vec(),
        }],
    )?;
    Ok(STANDARD.encode(bytes))
}

pub fn decode_embedding(field: &str) -> Result<Vec<f32>, String> {
    let bytes = STANDARD.decode(field).map_err(|e| format!("embedding is not valid base64: {e}"))?;
    let (_, mut records) = decode_emb(&bytes).map_err(|e| e.to_string())?;
    if records.len() != 1 {
        return Err(format!("embedding must hold exactly one record, got {}", records.len()));
    }
    Ok(records.pop().expect("one record").values)
}

/// Scores one query against a calibrated scorer.
pub fn answer(scorer: &Scorer, tau: f64, query: Query<'_>, id: Option<Value>) -> oosguard::Result<Response> {
    let result = scorer.score(query)?;
    let decision = decide(&result, tau);
    Ok(Response {
        id,
        verdict: decision.verdict.as_str().to_owned(),
        intent: match decision.intent {
            Some(c) => scorer.labels.label_name(Label::InScope(c)).to_owned(),
            None => oosguard::data::OOS_LABEL.to_owned(),
        },
        d_min: result.d_min,
        tau,
    })
}

fn handle(scorer: &Scorer, tau: f64, line: &str) -> Result<Response, (Option<Value>, String)> {
    let req: Request = serde_json::from_str(line).map_err(|e| (None, format!("malformed request: {e}")))?;
    let id = req.id;
    let fail = |id: &Option<Value>, m: String| (id.clone(), m);
    match (req.text, req.embedding) {
        (Some(text), None) => answer(scorer, tau, Query::Text(&text), id.clone()).map_err(|e| fail(&id, e.to_string())),
        (None, Some(emb)) => {
            let values = decode_embedding(&emb).map_err(|m| fail(&id, m))?;
            answer(scorer, tau, Query::Embedding(&values), id.clone()).map_err(|e| fail(&id, e.to_string()))
        }
        _ => Err(fail(&id, "request needs exactly one of \"text\" or \"embedding\"".into())),
    }
}

/// One response line (without the newline) for one request line.
pub fn respond(scorer: &Scorer, tau: f64, line: &str) -> String {
    let out = match handle(scorer, tau, line) {
        Ok(r) => serde_json::to_string(&r),
        Err((id, error)) => serde_json::to_string(&ErrorResponse { id, error }),
    };
    out.unwrap_or_else(|e| format!("{{\"error\":\"cannot encode response: {e}\"}}"))
}

/// Answers every line of `input` in order; blank lines are ignored.
pub fn serve_lines<R: BufRead, W: Write>(scorer: &Scorer, tau: f64, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", respond(scorer, tau, &line))?;
        output.flush()?;
    }
    Ok(())
}

fn connection(scorer: Arc<Scorer>, tau: f64, stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(&scorer, tau, reader, io::BufWriter::new(stream))
}

pub fn bind(addr: &str) -> CliResult<TcpListener> {
    let addrs: Vec<_> = addr
        .to_socket_addrs()
        .map_err(|e| CliError::usage(format!("bad address '{addr}': {e}")))?
        .collect();
    TcpListener::bind(&addrs[..]).map_err(|e| CliError::usage(format!("cannot listen on {addr}: {e}")))
}

/// Accepts connections forever, one thread each, sharing the scorer.
pub fn serve_tcp(scorer: Arc<Scorer>, tau: f64, listener: TcpListener) -> CliResult<()> {
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let scorer = Arc::clone(&scorer);
                thread::spawn(move || {
                    if let Err(e) = connection(scorer, tau, stream) {
                        eprintln!("connection error: {e}");
                    }
                });
            }
            Err(e) => eprintln!("accept failed: {e}"),
        }
    }
    Ok(())
}
