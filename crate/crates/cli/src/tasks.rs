//! Toy task suite: a copy task trained by next-token prediction, a
//! box-prediction task rewarded by IoU plus answer format, and a
//! single-digit addition QA task rewarded by exact-match accuracy plus
//! thinking format. Examples are a pure function of (domain id, index),
//! so train and held-out splits are just disjoint index ranges.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recap_core::rewards::{
    self, BBox, FormatMode, exact_match_reward, format_reward, iou_reward, parse_tagged,
};
use serde::{Deserialize, Serialize};

use crate::vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Copy three digits back: prompt `abc?`, target `abc`.
    Copy,
    /// Echo a box: prompt `abcd?`, answer `<answer>[a,b,c,d]</answer>`.
    Bbox,
    /// Single-digit addition: prompt `a+b?`, answer wrapped in think/answer tags.
    AddQa,
    /// Format primer for pretraining: addition prompts whose canonical
    /// completion carries the tag template around an arbitrary digit.
    /// Teaches the output format without teaching the answers, like an
    /// instruction-tuned base model before RL.
    AddQaPrimer,
}

impl TaskKind {
    pub fn format_mode(self) -> Option<FormatMode> {
        match self {
            TaskKind::Copy => None,
            TaskKind::Bbox => Some(FormatMode::Direct),
            TaskKind::AddQa | TaskKind::AddQaPrimer => Some(FormatMode::Thinking),
        }
    }

    /// Name of the headline evaluation metric for this task.
    pub fn primary_metric(self) -> &'static str {
        match self {
            TaskKind::Copy => "token_acc",
            TaskKind::Bbox => "iou",
            TaskKind::AddQa | TaskKind::AddQaPrimer => "acc",
        }
    }

    /// Reward names this task produces during RL training.
    pub fn reward_names(self) -> &'static [&'static str] {
        match self {
            TaskKind::Copy => &[],
            TaskKind::Bbox => &["iou", "answer_format"],
            TaskKind::AddQa | TaskKind::AddQaPrimer => &["acc", "think_format"],
        }
    }
}

/// One drawn example: the prompt, the canonical completion used as SFT
/// target, and the gold value rewards are scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub prompt: Vec<usize>,
    /// Canonical completion including the trailing EOS.
    pub target: Vec<usize>,
    pub gold_text: String,
    pub gold_box: Option<BBox>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stable per-example seed, independent of the run seed so every run
/// sees the same datasets.
fn example_seed(domain_id: &str, index: usize) -> u64 {
    fnv1a(domain_id.as_bytes()) ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

pub fn make_example(kind: TaskKind, domain_id: &str, index: usize) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(example_seed(domain_id, index));
    match kind {
        TaskKind::Copy => {
            let d: Vec<u8> = (0..3).map(|_| rng.random_range(0..10u8)).collect();
            let prompt = vec![vocab::digit(d[0]), vocab::digit(d[1]), vocab::digit(d[2]), vocab::QUERY];
            let target = vec![vocab::digit(d[0]), vocab::digit(d[1]), vocab::digit(d[2]), vocab::EOS];
            let gold_text = format!("{}{}{}", d[0], d[1], d[2]);
            Example { prompt, target, gold_text, gold_box: None }
        }
        TaskKind::Bbox => {
            let x1 = rng.random_range(0..5u8);
            let x2 = rng.random_range(x1 + 1..10u8);
            let y1 = rng.random_range(0..5u8);
            let y2 = rng.random_range(y1 + 1..10u8);
            let prompt = vec![
                vocab::digit(x1),
                vocab::digit(y1),
                vocab::digit(x2),
                vocab::digit(y2),
                vocab::QUERY,
            ];
            let target = vec![
                vocab::ANSWER_OPEN,
                vocab::LBRACKET,
                vocab::digit(x1),
                vocab::COMMA,
                vocab::digit(y1),
                vocab::COMMA,
                vocab::digit(x2),
                vocab::COMMA,
                vocab::digit(y2),
                vocab::RBRACKET,
                vocab::ANSWER_CLOSE,
                vocab::EOS,
            ];
            let gold_text = format!("[{x1},{y1},{x2},{y2}]");
            let gold_box = BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64);
            Example { prompt, target, gold_text, gold_box }
        }
        TaskKind::AddQa | TaskKind::AddQaPrimer => {
            let a = rng.random_range(0..3u8);
            let b = rng.random_range(0..3u8);
            let answer_digit = match kind {
                // the primer wraps an arbitrary digit in the template,
                // so it teaches the format but not the arithmetic
                TaskKind::AddQaPrimer => rng.random_range(0..10u8),
                _ => a + b,
            };
            let prompt = vec![vocab::digit(a), vocab::PLUS, vocab::digit(b), vocab::QUERY];
            let target = vec![
                vocab::THINK_OPEN,
                vocab::THINK_CLOSE,
                vocab::ANSWER_OPEN,
                vocab::digit(answer_digit),
                vocab::ANSWER_CLOSE,
                vocab::EOS,
            ];
            // gold stays the true sum; accuracy always measures real
            // correctness, including on primer data
            let gold_text = format!("{}", a + b);
            Example { prompt, target, gold_text, gold_box: None }
        }
    }
}

/// Fraction of gold-target positions reproduced; extra or missing
/// tokens count against the score.
pub fn token_accuracy(completion: &[usize], gold: &[usize]) -> f64 {
    let matches = gold
        .iter()
        .zip(completion.iter())
        .filter(|(g, c)| g == c)
        .count();
    matches as f64 / gold.len().max(completion.len()).max(1) as f64
}

/// Scores one completion against the example's gold value. Returns
/// `(reward name, value in [0,1])` pairs, keyed as in `reward_names`
/// for RL tasks and as `token_acc` for the copy task.
pub fn score_completion(kind: TaskKind, example: &Example, completion: &[usize]) -> Vec<(&'static str, f64)> {
    let text = vocab::detokenize(completion);
    match kind {
        TaskKind::Copy => vec![("token_acc", token_accuracy(completion, &example.target))],
        TaskKind::Bbox => {
            let gold = example.gold_box.as_ref().expect("bbox example carries a gold box");
            vec![
                ("iou", iou_reward(&text, gold, FormatMode::Direct)),
                ("answer_format", format_reward(&text, FormatMode::Direct)),
            ]
        }
        TaskKind::AddQa | TaskKind::AddQaPrimer => {
            let parsed = parse_tagged(&text, FormatMode::Thinking);
            let acc = match (parsed.well_formed, parsed.answer) {
                (true, Some(ans)) => exact_match_reward(&ans, &example.gold_text),
                _ => 0.0,
            };
            vec![
                ("acc", acc),
                ("think_format", format_reward(&text, FormatMode::Thinking)),
            ]
        }
    }
}

/// One record of the external JSONL dataset interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub prompt: String,
    pub gold: String,
    pub task: String,
    pub domain: String,
}

impl DatasetRecord {
    pub fn from_example(kind: TaskKind, domain: &str, example: &Example) -> Self {
        let task = match kind {
            TaskKind::Copy => "ntp",
            TaskKind::Bbox => "bbox",
            TaskKind::AddQa | TaskKind::AddQaPrimer => "qa",
        };
        Self {
            prompt: vocab::detokenize(&example.prompt),
            gold: example.gold_text.clone(),
            task: task.to_string(),
            domain: domain.to_string(),
        }
    }

    pub fn task_kind(&self) -> Option<TaskKind> {
        match self.task.as_str() {
            "ntp" => Some(TaskKind::Copy),
            "bbox" => Some(TaskKind::Bbox),
            "qa" => Some(TaskKind::AddQa),
            _ => None,
        }
    }

    /// Rebuilds a scoreable example from the serialized record.
    pub fn to_example(&self) -> Option<Example> {
        let kind = self.task_kind()?;
        let prompt = vocab::tokenize(&self.prompt)?;
        let gold_box = match kind {
            TaskKind::Bbox => Some(rewards::parse_bbox(&self.gold)?),
            _ => None,
        };
        let target = match kind {
            TaskKind::Copy => {
                let mut t = vocab::tokenize(&self.gold)?;
                t.push(vocab::EOS);
                t
            }
            TaskKind::Bbox => {
                let mut t = vocab::tokenize(&format!("<answer>{}</answer>", self.gold))?;
                t.push(vocab::EOS);
                t
            }
            TaskKind::AddQa | TaskKind::AddQaPrimer => {
                let mut t =
                    vocab::tokenize(&format!("<think></think><answer>{}</answer>", self.gold))?;
                t.push(vocab::EOS);
                t
            }
        };
        Some(Example { prompt, target, gold_text: self.gold.clone(), gold_box })
    }
}
