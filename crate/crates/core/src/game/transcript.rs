//! Line-oriented transcript format for adversary views.
//!
//! ```text
//! # adversary_seed=<u64>
//! t,move_kind,payload,answer
//! 1,regular,0110,2
//! 2,challenge,0110|1000,3.25
//! ```
//!
//! * Lines end with `\n`. The first line carries the adversary's seed, the
//!   second is the fixed column header, then one line per round in order.
//! * `move_kind` is `regular` or `challenge`.
//! * `payload` is the record as `0`/`1` characters (attribute 1 first); a
//!   challenge writes `left|right`.
//! * `answer` is a decimal integer for selection answers. Real answers use
//!   Rust's `{:?}` formatting of `f64`, which always contains `.`, `e`,
//!   `inf` or `NaN` and parses back to the same bits.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::stream::{Answer, Record};

use super::{AdversaryMove, View, ViewEntry};

pub const HEADER: &str = "t,move_kind,payload,answer";

pub fn format_answer(a: Answer) -> String {
    match a {
        Answer::Index(i) => i.to_string(),
        Answer::Value(v) => format!("{v:?}"),
    }
}

pub fn parse_answer(s: &str) -> Option<Answer> {
    if s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty() {
        return s.parse().ok().map(Answer::Index);
    }
    s.parse().ok().map(Answer::Value)
}

pub fn write_view(view: &View) -> String {
    let mut out = String::new();
    writeln!(out, "# adversary_seed={}", view.adversary_seed).unwrap();
    writeln!(out, "{HEADER}").unwrap();
    for e in &view.entries {
        let (kind, payload) = match &e.sent {
            AdversaryMove::Regular(x) => ("regular", x.to_string()),
            AdversaryMove::Challenge { left, right } => ("challenge", format!("{left}|{right}")),
        };
        writeln!(out, "{},{kind},{payload},{}", e.t, format_answer(e.answer)).unwrap();
    }
    out
}

pub fn parse_view(text: &str) -> Result<View> {
    let err = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty transcript"))?;
    let adversary_seed = first
        .strip_prefix("# adversary_seed=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(1, "expected '# adversary_seed=<u64>'"))?;
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(err(2, "missing column header")),
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let [t, kind, payload, answer] = fields[..] else {
            return Err(err(n, "expected 4 comma-separated fields"));
        };
        let t = t.parse().map_err(|_| err(n, "bad timestep"))?;
        let bits = |s: &str| s.parse::<Record>().map_err(|e| err(n, &e.to_string()));
        let sent = match kind {
            "regular" => AdversaryMove::Regular(bits(payload)?),
            "challenge" => {
                let (l, r) = payload
                    .split_once('|')
                    .ok_or_else(|| err(n, "challenge payload needs 'left|right'"))?;
                AdversaryMove::Challenge {
                    left: bits(l)?,
                    right: bits(r)?,
                }
            }
            _ => return Err(err(n, "move_kind must be 'regular' or 'challenge'")),
        };
        let answer = parse_answer(answer).ok_or_else(|| err(n, "bad answer"))?;
        entries.push(ViewEntry { t, sent, answer });
    }
    Ok(View {
        adversary_seed,
        entries,
    })
}
