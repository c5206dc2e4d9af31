//! Verifiable reward functions and the think/answer tag parser.
//!
//! All rewards are pure functions into `[0, 1]`. Malformed model output
//! is a parse outcome (zero reward), never an error: the parser is the
//! reward signal.
//!
//! The accepted grammar is strict. Thinking mode:
//! `<think>…</think><answer>…</answer>` with optional whitespace
//! between and around the blocks and no stray tag tokens anywhere.
//! Direct mode: a single `<answer>…</answer>` block and no think tags
//! at all.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("token sequences have different lengths: {predicted} vs {target}")]
    LengthMismatch { predicted: usize, target: usize },
}

/// Response format expected from the policy: thinking domains must emit
/// a reasoning block, perception domains answer directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatMode {
    Thinking,
    Direct,
}

/// Outcome of parsing a tagged response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub think: Option<String>,
    pub answer: Option<String>,
    pub well_formed: bool,
}

impl ParsedResponse {
    fn malformed() -> Self {
        Self { think: None, answer: None, well_formed: false }
    }
}

/// Axis-aligned box with `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        let b = Self { x1, y1, x2, y2 };
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        (finite && x1 <= x2 && y1 <= y2).then_some(b)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Per-reward values for one response, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub values: Vec<(String, f64)>,
}

impl RewardBreakdown {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.values.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn contains_any_tag(s: &str) -> bool {
    s.contains(THINK_OPEN) || s.contains(THINK_CLOSE) || s.contains(ANSWER_OPEN) || s.contains(ANSWER_CLOSE)
}

/// Strips `open` + content + `close` from the start of `s`, returning
/// (content, rest). The content is the text before the first `close`
/// and must itself be tag-free.
fn take_block<'a>(s: &'a str, open: &str, close: &str) -> Option<(&'a str, &'a str)> {
    let rest = s.strip_prefix(open)?;
    let end = rest.find(close)?;
    let content = &rest[..end];
    if contains_any_tag(content) {
        return None;
    }
    Some((content, &rest[end + close.len()..]))
}

/// Parses a tagged response under the strict single-block grammar.
/// Deviations produce `well_formed = false`, never an error.
pub fn parse_tagged(text: &str, mode: FormatMode) -> ParsedResponse {
    match mode {
        FormatMode::Thinking => {
            let s = text.trim_start();
            let Some((think, rest)) = take_block(s, THINK_OPEN, THINK_CLOSE) else {
                return ParsedResponse::malformed();
            };
            let rest = rest.trim_start();
            let Some((answer, tail)) = take_block(rest, ANSWER_OPEN, ANSWER_CLOSE) else {
                return ParsedResponse::malformed();
            };
            if !tail.trim().is_empty() {
                return ParsedResponse::malformed();
            }
            ParsedResponse {
                think: Some(think.to_owned()),
                answer: Some(answer.to_owned()),
                well_formed: true,
            }
        }
        FormatMode::Direct => {
            if text.contains(THINK_OPEN) || text.contains(THINK_CLOSE) {
                return ParsedResponse::malformed();
            }
            let s = text.trim_start();
            let Some((answer, tail)) = take_block(s, ANSWER_OPEN, ANSWER_CLOSE) else {
                return ParsedResponse::malformed();
            };
            if !tail.trim().is_empty() {
                return ParsedResponse::malformed();
            }
            ParsedResponse {
                think: None,
                answer: Some(answer.to_owned()),
                well_formed: true,
            }
        }
    }
}

/// Renders the canonical template for a (think, answer) pair; the
/// inverse of [`parse_tagged`] for tag-free contents.
pub fn render_tagged(think: Option<&str>, answer: &str) -> String {
    match think {
        Some(t) => alloc::format!("{THINK_OPEN}{t}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"),
        None => alloc::format!("{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"),
    }
}

/// 1 iff the response conforms to the tag template for `mode`.
pub fn format_reward(text: &str, mode: FormatMode) -> f64 {
    if parse_tagged(text, mode).well_formed {
        1.0
    } else {
        0.0
    }
}

fn normalize_answer(s: &str) -> String {
    let lowered = s.trim().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut in_space = false;
    for ch in lowered.chars() {
        if ch.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(ch);
            in_space = false;
        }
    }
    if let Some(stripped) = out.strip_suffix('.') {
        return stripped.to_owned();
    }
    out
}

/// 1 iff the answers agree after trimming, case-folding, whitespace
/// collapsing, and stripping a single trailing period.
pub fn exact_match_reward(answer: &str, gold: &str) -> f64 {
    if normalize_answer(answer) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Parses `[x1, y1, x2, y2]` with optional spaces; wrong arity,
/// non-numeric entries, or an inverted box are malformed (`None`).
pub fn parse_bbox(answer: &str) -> Option<BBox> {
    let s = answer.trim();
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 4 {
        return None;
    }
    let mut vals = [0.0f64; 4];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().ok()?;
    }
    BBox::new(vals[0], vals[1], vals[2], vals[3])
}

/// Intersection-over-union of two valid boxes; a degenerate zero-area
/// union scores 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// IoU of the parsed answer box against gold; 0 when the response
/// format or the box itself fails to parse.
pub fn iou_reward(text: &str, gold: &BBox, mode: FormatMode) -> f64 {
    let parsed = parse_tagged(text, mode);
    if !parsed.well_formed {
        return 0.0;
    }
    match parsed.answer.as_deref().and_then(parse_bbox) {
        Some(b) => iou(&b, gold),
        None => 0.0,
    }
}

/// Fraction of positions where the predicted token equals the target.
pub fn mean_token_accuracy(predicted: &[usize], target: &[usize]) -> Result<f64, RewardError> {
    if predicted.len() != target.len() {
        return Err(RewardError::LengthMismatch {
            predicted: predicted.len(),
            target: target.len(),
        });
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(target).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Bridges a bounded reward into the loss-based scheduler: `1 - r`.
pub fn reward_to_loss(r: f64) -> f64 {
    1.0 - r
}
