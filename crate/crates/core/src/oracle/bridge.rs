//! Client for an external detector speaking newline-delimited JSON.
//!
//! Request: `{"id": 7, "image_path": "/tmp/x.pgm", "boxes": [[x, y, w, h]]}`.
//! Response: `{"id": 7, "objectness": [0.93]}` or `{"id": 7, "error": "..."}`.
//! A connection carries one request at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::imaging::{save_pgm, BBox, GrayImage};

use super::{check_scores, Oracle, OracleError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: i64,
    pub image_path: String,
    pub boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectness: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Where the detector server lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeEndpoint {
    /// Spawn `program args...` and talk over its stdin/stdout.
    Spawn { program: String, args: Vec<String> },
    /// Connect to `host:port`.
    Tcp(String),
}

impl BridgeEndpoint {
    /// `tcp://host:port` selects TCP; anything else is a whitespace-split
    /// command line.
    pub fn parse(spec: &str) -> Result<Self, OracleError> {
        if let Some(addr) = spec.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(OracleError::Transport("empty tcp address".into()));
            }
            return Ok(Self::Tcp(addr.to_string()));
        }
        let mut parts = spec.split_whitespace().map(str::to_string);
        match parts.next() {
            Some(program) => Ok(Self::Spawn {
                program,
                args: parts.collect(),
            }),
            None => Err(OracleError::Transport("empty bridge endpoint".into())),
        }
    }
}

struct Connection {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_id: i64,
    line: String,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn transport(e: impl std::fmt::Display) -> OracleError {
    OracleError::Transport(e.to_string())
}

pub struct BridgeOracle {
    conn: Mutex<Connection>,
    scratch: TempDir,
}

impl std::fmt::Debug for BridgeOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeOracle").field("scratch", &self.scratch.path()).finish()
    }
}

impl BridgeOracle {
    pub fn connect(endpoint: &BridgeEndpoint) -> Result<Self, OracleError> {
        let conn = match endpoint {
            BridgeEndpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(transport)?;
                let _ = stream.set_nodelay(true);
                let reader = stream.try_clone().map_err(transport)?;
                Connection {
                    reader: BufReader::new(Box::new(reader)),
                    writer: Box::new(stream),
                    child: None,
                    next_id: 1,
                    line: String::new(),
                }
            }
            BridgeEndpoint::Spawn { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| OracleError::Transport(format!("cannot start {program}: {e}")))?;
                let stdin = child.stdin.take().expect("piped");
                let stdout = child.stdout.take().expect("piped");
                Connection {
                    reader: BufReader::new(Box::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                    next_id: 1,
                    line: String::new(),
                }
            }
        };
        Ok(Self {
            conn: Mutex::new(conn),
            scratch: tempfile::tempdir().map_err(transport)?,
        })
    }

    /// Sends one request for an image already on disk.
    pub fn query_path(&self, image_path: PathBuf, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        exchange(&mut conn, image_path, boxes)
    }
}

fn exchange(conn: &mut Connection, image_path: PathBuf, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
    let id = conn.next_id;
    conn.next_id += 1;
    let request = BridgeRequest {
        id,
        image_path: image_path.to_string_lossy().into_owned(),
        boxes: boxes.iter().map(BBox::to_array).collect(),
    };
    let mut text = serde_json::to_string(&request).expect("request serializes");
    text.push('\n');
    conn.writer.write_all(text.as_bytes()).map_err(transport)?;
    conn.writer.flush().map_err(transport)?;

    let Connection { reader, line, .. } = conn;
    line.clear();
    let n = reader.read_line(line).map_err(transport)?;
    if n == 0 {
        return Err(OracleError::Transport("bridge closed the connection".into()));
    }
    parse_response(line.trim_end(), id, boxes.len())
}

/// Validates one response line against the request it answers.
pub(crate) fn parse_response(line: &str, id: i64, n_boxes: usize) -> Result<Vec<f64>, OracleError> {
    let resp: BridgeResponse = serde_json::from_str(line).map_err(|e| OracleError::Malformed(e.to_string()))?;
    if let Some(msg) = resp.error {
        // -1 answers a request the server could not parse at all
        if resp.id == id || resp.id == -1 {
            return Err(OracleError::Remote(msg));
        }
    }
    if resp.id != id {
        return Err(OracleError::IdMismatch {
            expected: id,
            found: resp.id,
        });
    }
    let scores = resp
        .objectness
        .ok_or_else(|| OracleError::Malformed("response has neither objectness nor error".into()))?;
    if scores.len() != n_boxes {
        return Err(OracleError::Malformed(format!(
            "{} scores for {n_boxes} boxes",
            scores.len()
        )));
    }
    check_scores(&scores)?;
    Ok(scores)
}

impl Oracle for BridgeOracle {
    fn score(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        for b in boxes {
            image.check_box(b)?;
        }
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        let path = self.scratch.path().join("frame.pgm");
        // the frame file is shared, so it is written under the connection lock
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        save_pgm(image, &path)?;
        exchange(&mut conn, path, boxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            BridgeEndpoint::parse("tcp://127.0.0.1:9000").unwrap(),
            BridgeEndpoint::Tcp("127.0.0.1:9000".into())
        );
        assert_eq!(
            BridgeEndpoint::parse("python3 -m bridge --mock").unwrap(),
            BridgeEndpoint::Spawn {
                program: "python3".into(),
                args: vec!["-m".into(), "bridge".into(), "--mock".into()],
            }
        );
        assert!(BridgeEndpoint::parse("  ").is_err());
        assert!(BridgeEndpoint::parse("tcp://").is_err());
    }

    #[test]
    fn happy_path_response() {
        let s = parse_response(r#"{"id":7,"objectness":[0.1,0.9,0.5]}"#, 7, 3).unwrap();
        assert_eq!(s, vec![0.1, 0.9, 0.5]);
    }

    #[test]
    fn response_errors_are_distinct() {
        assert!(matches!(
            parse_response(r#"{"id":8,"objectness":[0.1]}"#, 7, 1),
            Err(OracleError::IdMismatch { expected: 7, found: 8 })
        ));
        match parse_response(r#"{"id":7,"error":"model not loaded"}"#, 7, 1) {
            Err(OracleError::Remote(m)) => assert_eq!(m, "model not loaded"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_response("{not json", 7, 1), Err(OracleError::Malformed(_))));
        assert!(matches!(
            parse_response(r#"{"id":7,"objectness":[0.1]}"#, 7, 2),
            Err(OracleError::Malformed(_))
        ));
        assert!(matches!(
            parse_response(r#"{"id":7,"objectness":[1.5]}"#, 7, 1),
            Err(OracleError::OutOfRange { .. })
        ));
        assert!(matches!(parse_response(r#"{"id":7}"#, 7, 1), Err(OracleError::Malformed(_))));
    }

    #[test]
    fn retriability() {
        assert!(OracleError::Transport("x".into()).is_retriable());
        assert!(OracleError::IdMismatch { expected: 1, found: 2 }.is_retriable());
        assert!(!OracleError::Remote("x".into()).is_retriable());
        assert!(!OracleError::Malformed("x".into()).is_retriable());
    }

    #[test]
    fn request_wire_format() {
        let r = BridgeRequest {
            id: 3,
            image_path: "/tmp/a.pgm".into(),
            boxes: vec![[1.0, 2.0, 3.0, 4.0]],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":3,"image_path":"/tmp/a.pgm","boxes":[[1.0,2.0,3.0,4.0]]}"#
        );
    }
}
