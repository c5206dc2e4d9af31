//! Fixed token vocabulary for the toy tasks: digits, arithmetic and
//! bracket symbols, the query marker, and the think/answer tags as
//! single tokens.

/// Padding token (empty context slots).
pub const PAD: usize = 0;
/// End-of-sequence token.
pub const EOS: usize = 1;
/// First digit token; digit `d` is `DIGIT0 + d`.
pub const DIGIT0: usize = 2;
pub const PLUS: usize = 12;
pub const LBRACKET: usize = 13;
pub const RBRACKET: usize = 14;
pub const COMMA: usize = 15;
/// Query marker terminating every prompt.
pub const QUERY: usize = 16;
pub const THINK_OPEN: usize = 17;
pub const THINK_CLOSE: usize = 18;
pub const ANSWER_OPEN: usize = 19;
pub const ANSWER_CLOSE: usize = 20;

pub const VOCAB_SIZE: usize = 21;

const SURFACE: [&str; VOCAB_SIZE] = [
    "", "", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "[", "]", ",", "?", "<think>",
    "</think>", "<answer>", "</answer>",
];

pub fn digit(d: u8) -> usize {
    assert!(d < 10, "not a single digit: {d}");
    DIGIT0 + d as usize
}

/// Surface string of one token. PAD and EOS render as the empty string.
pub fn token_str(token: usize) -> &'static str {
    SURFACE[token]
}

/// Concatenated surface form; stops at the first EOS and skips PAD.
pub fn detokenize(tokens: &[usize]) -> String {
    let mut out = String::new();
    for &t in tokens {
        if t == EOS {
            break;
        }
        if t != PAD {
            out.push_str(SURFACE[t]);
        }
    }
    out
}

/// Greedy longest-match tokenizer over the fixed surface forms.
/// Returns None on any character outside the vocabulary.
pub fn tokenize(text: &str) -> Option<Vec<usize>> {
    // tags first so '<' never falls through to single-char matching
    const MULTI: [(&str, usize); 4] = [
        ("<think>", THINK_OPEN),
        ("</think>", THINK_CLOSE),
        ("<answer>", ANSWER_OPEN),
        ("</answer>", ANSWER_CLOSE),
    ];
    let mut rest = text;
    let mut out = Vec::new();
    'outer: while !rest.is_empty() {
        for (surface, token) in MULTI {
            if let Some(tail) = rest.strip_prefix(surface) {
                out.push(token);
                rest = tail;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().unwrap();
        let token = match ch {
            '0'..='9' => digit(ch as u8 - b'0'),
            '+' => PLUS,
            '[' => LBRACKET,
            ']' => RBRACKET,
            ',' => COMMA,
            '?' => QUERY,
            _ => return None,
        };
        out.push(token);
        rest = &rest[ch.len_utf8()..];
    }
    Some(out)
}
