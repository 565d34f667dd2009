//! Semantic-category annotation through a pluggable client.
//!
//! The wire protocol (one JSON object per line) is documented in
//! `docs/annotator-protocol.md`:
//!
//! ```text
//! request:  {"query": "...", "taxonomy_version": "tvg-semantics-v1"}
//! response: {"code": "OC"}            on success
//!           {"error": "message"}      when the server cannot answer
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::SemanticCategory;

pub const TAXONOMY_VERSION: &str = "tvg-semantics-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub query: String,
    pub taxonomy_version: String,
}

impl AnnotateRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self { query: query.into(), taxonomy_version: TAXONOMY_VERSION.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("annotator transport failure: {0}")]
pub struct TransportError(pub String);

/// Anything that can label one query with a category code.
pub trait AnnotatorClient: Sync {
    fn annotate(&self, request: &AnnotateRequest) -> Result<AnnotateResponse, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Category(SemanticCategory),
    /// The annotator answered with an invalid code twice.
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum AnnotationFailure {
    EmptyQuery,
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationErrorRecord {
    pub query: String,
    pub failure: AnnotationFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub labels: BTreeMap<String, Label>,
    pub errors: Vec<AnnotationErrorRecord>,
    pub retries: usize,
}

enum Outcome {
    Labeled(Label, usize),
    Failed(AnnotationFailure),
}

fn annotate_one(query: &str, client: &dyn AnnotatorClient) -> Outcome {
    if query.trim().is_empty() {
        return Outcome::Failed(AnnotationFailure::EmptyQuery);
    }
    let request = AnnotateRequest::new(query);
    for attempt in 0..2 {
        match client.annotate(&request) {
            Err(e) => return Outcome::Failed(AnnotationFailure::Transport(e.0)),
            Ok(resp) => {
                if let Ok(code) = resp.code.parse::<SemanticCategory>() {
                    return Outcome::Labeled(Label::Category(code), attempt);
                }
                log::warn!("annotator returned invalid code {:?} for {query:?}", resp.code);
            }
        }
    }
    Outcome::Labeled(Label::Unlabeled, 1)
}

/// Label every distinct query, with at most `max_concurrency` requests in
/// flight. Failures are recorded per query and never abort the batch.
pub fn annotate_categories(queries: &[String], client: &dyn AnnotatorClient, max_concurrency: usize) -> AnnotationReport {
    let mut distinct: Vec<&str> = queries.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();

    let next = AtomicUsize::new(0);
    let workers = max_concurrency.clamp(1, distinct.len().max(1));
    let mut results: Vec<(usize, Outcome)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(q) = distinct.get(i) else { break };
                        local.push((i, annotate_one(q, client)));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("annotation worker panicked")).collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut report = AnnotationReport::default();
    for (i, outcome) in results {
        let query = distinct[i].to_string();
        match outcome {
            Outcome::Labeled(label, retries) => {
                report.retries += retries;
                report.labels.insert(query, label);
            }
            Outcome::Failed(failure) => report.errors.push(AnnotationErrorRecord { query, failure }),
        }
    }
    report
}

/// Deterministic keyword annotator; first matching rule wins, with `HAS` as
/// the fallback.
#[derive(Debug, Clone, Default)]
pub struct KeywordAnnotator;

const KEYWORD_RULES: &[(SemanticCategory, &[&str])] = &[
    (SemanticCategory::OC, &["number of", "counts", "how many", "count "]),
    (SemanticCategory::OT, &["turns into", "becomes", "changes from", "transforms", "melts", "breaks"]),
    (SemanticCategory::EC, &["gets dark", "lights turn", "starts raining", "scene changes", "weather changes", "sun sets"]),
    (SemanticCategory::ES, &["is raining", "is dark", "is sunny", "the room is", "outdoors", "indoors"]),
    (SemanticCategory::OA, &["color", "colour", "red ", "blue ", "green ", "shape", "size of"]),
    (SemanticCategory::OEC, &["appears", "disappears", "shows up", "comes into view"]),
    (SemanticCategory::OES, &["there is", "there are", "is visible", "can be seen"]),
    (SemanticCategory::HP, &["sits", "stands", "lying", "lies down", "kneels", "crouches"]),
    (SemanticCategory::HAP, &["first", " then ", "next", "step", "after that"]),
    (SemanticCategory::HAC, &[" while ", " and ", "together with"]),
];

impl KeywordAnnotator {
    pub fn classify(query: &str) -> SemanticCategory {
        let q = format!(" {} ", query.to_lowercase());
        KEYWORD_RULES
            .iter()
            .find(|(_, words)| words.iter().any(|w| q.contains(w)))
            .map_or(SemanticCategory::HAS, |(c, _)| *c)
    }
}

impl AnnotatorClient for KeywordAnnotator {
    fn annotate(&self, request: &AnnotateRequest) -> Result<AnnotateResponse, TransportError> {
        Ok(AnnotateResponse { code: Self::classify(&request.query).code().to_string() })
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    code: Option<String>,
    error: Option<String>,
}

/// Talks to an annotator process over its standard streams. Requests are
/// serialized through one pipe pair.
pub struct StdioAnnotator {
    child: Mutex<Child>,
    pipes: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
}

impl StdioAnnotator {
    pub fn spawn(mut command: Command) -> std::io::Result<Self> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child: Mutex::new(child), pipes: Mutex::new((stdin, stdout)) })
    }
}

impl AnnotatorClient for StdioAnnotator {
    fn annotate(&self, request: &AnnotateRequest) -> Result<AnnotateResponse, TransportError> {
        let err = |e: &dyn std::fmt::Display| TransportError(e.to_string());
        let mut guard = self.pipes.lock().map_err(|e| err(&e))?;
        let (stdin, stdout) = &mut *guard;
        let line = serde_json::to_string(request).map_err(|e| err(&e))?;
        writeln!(stdin, "{line}").and_then(|_| stdin.flush()).map_err(|e| err(&e))?;
        let mut reply = String::new();
        if stdout.read_line(&mut reply).map_err(|e| err(&e))? == 0 {
            return Err(TransportError("annotator closed its output".into()));
        }
        let wire: WireResponse = serde_json::from_str(reply.trim_end()).map_err(|e| err(&e))?;
        match (wire.code, wire.error) {
            (Some(code), None) => Ok(AnnotateResponse { code }),
            (_, Some(e)) => Err(TransportError(e)),
            (None, None) => Err(TransportError("response has neither code nor error".into())),
        }
    }
}

impl Drop for StdioAnnotator {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Serve the line protocol: one request per input line, one response per
/// output line, until end of input.
pub fn serve_lines<R: BufRead, W: Write>(client: &dyn AnnotatorClient, input: R, mut output: W) -> std::io::Result<usize> {
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<AnnotateRequest>(&line) {
            Err(e) => serde_json::json!({ "error": format!("malformed request: {e}") }),
            Ok(req) if req.taxonomy_version != TAXONOMY_VERSION => {
                serde_json::json!({ "error": format!("unsupported taxonomy_version {:?}", req.taxonomy_version) })
            }
            Ok(req) => match client.annotate(&req) {
                Ok(resp) => serde_json::json!({ "code": resp.code }),
                Err(e) => serde_json::json!({ "error": e.0 }),
            },
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn stub_rules() {
        assert_eq!(KeywordAnnotator::classify("the number of dogs reaches three"), SemanticCategory::OC);
        assert_eq!(KeywordAnnotator::classify("the ice melts into water"), SemanticCategory::OT);
        assert_eq!(KeywordAnnotator::classify("a person opens a door"), SemanticCategory::HAS);
        assert_eq!(KeywordAnnotator::classify("a woman sits on the couch"), SemanticCategory::HP);
    }

    struct Scripted {
        replies: Vec<&'static str>,
        calls: AtomicUsize,
    }

    impl AnnotatorClient for Scripted {
        fn annotate(&self, _: &AnnotateRequest) -> Result<AnnotateResponse, TransportError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            match self.replies[i.min(self.replies.len() - 1)] {
                "FAIL" => Err(TransportError("connection reset".into())),
                code => Ok(AnnotateResponse { code: code.into() }),
            }
        }
    }

    #[test]
    fn invalid_code_is_retried_then_unlabeled() {
        let client = Scripted { replies: vec!["??", "nope"], calls: AtomicUsize::new(0) };
        let r = annotate_categories(&["a man runs".to_string()], &client, 1);
        assert_eq!(r.labels["a man runs"], Label::Unlabeled);
        assert_eq!(client.calls.load(Ordering::SeqCst), 2);

        let client = Scripted { replies: vec!["??", "HP"], calls: AtomicUsize::new(0) };
        let r = annotate_categories(&["a man runs".to_string()], &client, 1);
        assert_eq!(r.labels["a man runs"], Label::Category(SemanticCategory::HP));
        assert_eq!(r.retries, 1);
    }

    #[test]
    fn failures_are_isolated() {
        let client = Scripted { replies: vec!["FAIL"], calls: AtomicUsize::new(0) };
        let r = annotate_categories(&["x".to_string(), "  ".to_string()], &client, 4);
        assert!(r.labels.is_empty());
        assert_eq!(r.errors.len(), 2);
        assert!(r.errors.iter().any(|e| e.failure == AnnotationFailure::EmptyQuery));
        // The empty query never reached the client.
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn concurrent_annotation_is_deterministic() {
        let queries: Vec<String> = (0..200).map(|i| format!("query {i} the number of cups")).collect();
        let a = annotate_categories(&queries, &KeywordAnnotator, 8);
        let b = annotate_categories(&queries, &KeywordAnnotator, 1);
        assert_eq!(a, b);
        assert_eq!(a.labels.len(), 200);
    }

    #[test]
    fn line_server_protocol() {
        let input = concat!(
            "{\"query\":\"the number of dogs reaches three\",\"taxonomy_version\":\"tvg-semantics-v1\"}\n",
            "not json\n",
            "{\"query\":\"x\",\"taxonomy_version\":\"v0\"}\n",
        );
        let mut out = Vec::new();
        assert_eq!(serve_lines(&KeywordAnnotator, input.as_bytes(), &mut out).unwrap(), 3);
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines[0], r#"{"code":"OC"}"#);
        assert!(lines[1].starts_with(r#"{"error":"malformed request"#));
        assert!(lines[2].contains("unsupported taxonomy_version"));
    }
}
