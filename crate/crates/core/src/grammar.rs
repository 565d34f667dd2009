//! The think/answer response template and the timestamped caption format
//! used inside the think block.
//!
//! The accepted language is written out in `docs/response-grammar.ebnf`.
//! In short, a well-formed response is
//!
//! ```text
//! <think> ... </think> <answer> [<] 12.5 to 30 [>] </answer>
//! ```
//!
//! with optional whitespace between atoms, nothing before `<think>` or after
//! `</answer>`, no nested or repeated tags, and plain decimal numbers.

use serde::{Deserialize, Serialize};

use crate::span::{SpanError, TimeSpan};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Result of parsing one raw response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseOutcome {
    /// The whole response matches the template.
    pub format_ok: bool,
    /// Answer span, recovered even from malformed responses when an
    /// `<answer>` block with a numeric body can be located.
    pub span: Option<TimeSpan>,
    pub think_text: Option<String>,
    /// Whitespace-delimited units in `think_text`.
    pub think_token_estimate: usize,
}

/// Parse a raw response. Never fails: problems show up as `format_ok = false`.
pub fn parse_response(text: &str) -> ParseOutcome {
    if let Some((think, span)) = parse_strict(text) {
        return ParseOutcome {
            format_ok: true,
            span: Some(span),
            think_token_estimate: think.split_whitespace().count(),
            think_text: Some(think.to_string()),
        };
    }
    let think_text = between(text, THINK_OPEN, THINK_CLOSE).map(str::to_string);
    let span = between(text, ANSWER_OPEN, ANSWER_CLOSE).and_then(parse_answer_body);
    ParseOutcome {
        format_ok: false,
        span,
        think_token_estimate: think_text.as_deref().map_or(0, |t| t.split_whitespace().count()),
        think_text,
    }
}

/// Lossy UTF-8 front end for arbitrary bytes.
pub fn parse_response_bytes(bytes: &[u8]) -> ParseOutcome {
    parse_response(&String::from_utf8_lossy(bytes))
}

/// Template reward: 1 for a well-formed response, 0 otherwise.
pub fn format_reward(outcome: &ParseOutcome) -> u8 {
    u8::from(outcome.format_ok)
}

fn contains_tag(s: &str) -> bool {
    TAGS.iter().any(|t| s.contains(t))
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

fn parse_strict(text: &str) -> Option<(&str, TimeSpan)> {
    let rest = text.trim_start().strip_prefix(THINK_OPEN)?;
    let think_len = rest.find(THINK_CLOSE)?;
    let think = &rest[..think_len];
    if contains_tag(think) {
        return None;
    }
    let rest = rest[think_len + THINK_CLOSE.len()..].trim_start().strip_prefix(ANSWER_OPEN)?;
    let body_len = rest.find(ANSWER_CLOSE)?;
    let body = &rest[..body_len];
    if !rest[body_len + ANSWER_CLOSE.len()..].trim().is_empty() {
        return None;
    }
    Some((think, parse_answer_body(body)?))
}

/// Cursor over a template fragment.
struct Scanner<'a> {
    s: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(s: &'a str) -> Self {
        Self { s }
    }

    fn skip_ws(&mut self) {
        self.s = self.s.trim_start();
    }

    fn eat(&mut self, lit: &str) -> bool {
        match self.s.strip_prefix(lit) {
            Some(rest) => {
                self.s = rest;
                true
            }
            None => false,
        }
    }

    /// `digit+ ("." digit+)?`
    fn number(&mut self) -> Option<f64> {
        let bytes = self.s.as_bytes();
        let int = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
        if int == 0 {
            return None;
        }
        let mut len = int;
        if bytes.get(int) == Some(&b'.') {
            let frac = bytes[int + 1..].iter().take_while(|b| b.is_ascii_digit()).count();
            if frac == 0 {
                return None;
            }
            len = int + 1 + frac;
        }
        let value = self.s[..len].parse::<f64>().ok()?;
        self.s = &self.s[len..];
        value.is_finite().then_some(value)
    }

    /// `number ws "to" ws number`
    fn range(&mut self) -> Option<TimeSpan> {
        let start = self.number()?;
        self.skip_ws();
        if !self.eat("to") {
            return None;
        }
        self.skip_ws();
        let end = self.number()?;
        Some(TimeSpan::raw(start, end))
    }

    fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

fn parse_answer_body(body: &str) -> Option<TimeSpan> {
    let mut sc = Scanner::new(body);
    sc.skip_ws();
    sc.eat("<");
    sc.skip_ws();
    let span = sc.range()?;
    sc.skip_ws();
    sc.eat(">");
    sc.skip_ws();
    sc.is_empty().then_some(span)
}

/// One timestamped caption from a reasoning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotSegment {
    pub span: TimeSpan,
    pub caption: String,
}

impl CotSegment {
    pub fn new(span: TimeSpan, caption: impl Into<String>) -> Self {
        Self { span, caption: caption.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRejection {
    Malformed,
    EmptyCaption,
    InvalidSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSegment {
    /// Position among the `;`-separated pieces.
    pub index: usize,
    pub text: String,
    pub reason: SegmentRejection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CotParse {
    pub segments: Vec<CotSegment>,
    pub rejected: Vec<RejectedSegment>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse `a to b: caption; c to d: caption` out of a think body. Pieces that
/// do not match are skipped and listed in `rejected`; blank pieces are ignored.
pub fn parse_cot(think_text: &str) -> CotParse {
    let mut body = think_text.trim();
    if let Some(inner) = body.strip_prefix('<').and_then(|b| b.strip_suffix('>')) {
        body = inner;
    }
    let mut out = CotParse::default();
    for (index, piece) in body.split(';').enumerate() {
        if piece.trim().is_empty() {
            continue;
        }
        match parse_segment(piece) {
            Ok(seg) => out.segments.push(seg),
            Err(reason) => out.rejected.push(RejectedSegment {
                index,
                text: piece.trim().to_string(),
                reason,
            }),
        }
    }
    out
}

fn parse_segment(piece: &str) -> Result<CotSegment, SegmentRejection> {
    let mut sc = Scanner::new(piece);
    sc.skip_ws();
    let span = sc.range().ok_or(SegmentRejection::Malformed)?;
    sc.skip_ws();
    if !sc.eat(":") {
        return Err(SegmentRejection::Malformed);
    }
    let caption = normalize_ws(sc.s);
    if caption.is_empty() {
        return Err(SegmentRejection::EmptyCaption);
    }
    span.validate().map_err(|_| SegmentRejection::InvalidSpan)?;
    Ok(CotSegment { span, caption })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SerializeError {
    #[error("segment {index}: {source}")]
    Segment { index: usize, source: SpanError },
    #[error("answer span: {0}")]
    Answer(SpanError),
    #[error("segment {0} has an empty caption")]
    EmptyCaption(usize),
    #[error("segment {0} caption contains a reserved character (';', '<' or '>')")]
    ReservedCharacter(usize),
}

/// Render segments and an answer as a complete response. Captions are
/// whitespace-normalized; numbers use the shortest round-tripping decimal form.
pub fn serialize_cot(segments: &[CotSegment], answer: &TimeSpan) -> Result<String, SerializeError> {
    answer.validate().map_err(SerializeError::Answer)?;
    let mut parts = Vec::with_capacity(segments.len());
    for (index, seg) in segments.iter().enumerate() {
        seg.span
            .validate()
            .map_err(|source| SerializeError::Segment { index, source })?;
        let caption = normalize_ws(&seg.caption);
        if caption.is_empty() {
            return Err(SerializeError::EmptyCaption(index));
        }
        if caption.contains([';', '<', '>']) {
            return Err(SerializeError::ReservedCharacter(index));
        }
        parts.push(format!("{} to {}: {}", seg.span.start, seg.span.end, caption));
    }
    Ok(format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{ANSWER_OPEN}{} to {}{ANSWER_CLOSE}",
        parts.join("; "),
        answer.start,
        answer.end
    ))
}
