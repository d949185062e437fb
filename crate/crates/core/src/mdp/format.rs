//! Plain-text MDP documents.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! n_states 2
//! n_actions 1
//! gamma 0.9
//! transition
//! 0 0 1 1.0
//! 1 0 1 1.0
//! end
//! reward
//! 0 0 1 5.0
//! end
//! ```
//!
//! The three header fields must precede the blocks. Each block line is a
//! `state action next value` quadruple; quadruples not listed are zero and
//! a quadruple may appear at most once per block. Values are written with
//! 17 significant digits, so a save/load round trip is exact.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{validate_mdp, Mdp};
use crate::error::{Error, Result};

pub fn write_mdp(m: &Mdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n_states {}", m.n_states());
    let _ = writeln!(out, "n_actions {}", m.n_actions());
    let _ = writeln!(out, "gamma {:.16e}", m.gamma());
    for (name, get) in [
        ("transition", Mdp::transition_prob as fn(&Mdp, usize, usize, usize) -> f64),
        ("reward", Mdp::reward_sas),
    ] {
        let _ = writeln!(out, "{name}");
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                for next in 0..m.n_states() {
                    let x = get(m, s, a, next);
                    if x != 0.0 || x.is_sign_negative() {
                        let _ = writeln!(out, "{s} {a} {next} {x:.16e}");
                    }
                }
            }
        }
        let _ = writeln!(out, "end");
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Header,
    Transition,
    Reward,
}

pub fn parse_mdp(text: &str) -> Result<Mdp> {
    let mut n_states: Option<usize> = None;
    let mut n_actions: Option<usize> = None;
    let mut gamma: Option<f64> = None;
    let mut transition: Vec<f64> = Vec::new();
    let mut reward: Vec<f64> = Vec::new();
    let mut seen_blocks = HashSet::new();
    let mut seen_entries = HashSet::new();
    let mut block = Block::Header;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match block {
            Block::Header => match fields.as_slice() {
                ["n_states", v] => n_states = Some(v.parse().map_err(|e| err(format!("{e}")))?),
                ["n_actions", v] => n_actions = Some(v.parse().map_err(|e| err(format!("{e}")))?),
                ["gamma", v] => gamma = Some(v.parse().map_err(|e| err(format!("{e}")))?),
                [name @ ("transition" | "reward")] => {
                    let (ns, na) = match (n_states, n_actions, gamma) {
                        (Some(ns), Some(na), Some(_)) => (ns, na),
                        _ => return Err(err("n_states, n_actions and gamma must precede blocks".into())),
                    };
                    if !seen_blocks.insert(*name) {
                        return Err(err(format!("duplicate {name} block")));
                    }
                    let len = ns
                        .checked_mul(na)
                        .and_then(|x| x.checked_mul(ns))
                        .ok_or_else(|| err("dimensions overflow".into()))?;
                    transition.resize(len, 0.0);
                    reward.resize(len, 0.0);
                    seen_entries.clear();
                    block = if *name == "transition" { Block::Transition } else { Block::Reward };
                }
                _ => return Err(err(format!("unexpected line '{line}'"))),
            },
            Block::Transition | Block::Reward => {
                if fields.as_slice() == ["end"] {
                    block = Block::Header;
                    continue;
                }
                let [s, a, next, value] = fields.as_slice() else {
                    return Err(err(format!("expected 'state action next value', got '{line}'")));
                };
                let (ns, na) = (n_states.unwrap_or(0), n_actions.unwrap_or(0));
                let idx = |x: &str, bound: usize, what: &str| -> Result<usize> {
                    let v: usize = x.parse().map_err(|e| err(format!("{what}: {e}")))?;
                    if v >= bound {
                        return Err(err(format!("{what} {v} out of range (< {bound})")));
                    }
                    Ok(v)
                };
                let s = idx(s, ns, "state")?;
                let a = idx(a, na, "action")?;
                let next = idx(next, ns, "next state")?;
                let value: f64 = value.parse().map_err(|e| err(format!("value: {e}")))?;
                if !seen_entries.insert((s, a, next)) {
                    return Err(err(format!("duplicate entry ({s}, {a}, {next})")));
                }
                let target = if block == Block::Transition { &mut transition } else { &mut reward };
                target[(s * na + a) * ns + next] = value;
            }
        }
    }
    if block != Block::Header {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "unterminated block (missing 'end')".into(),
        });
    }
    if !seen_blocks.contains("transition") {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "missing transition block".into(),
        });
    }
    let (Some(ns), Some(na), Some(g)) = (n_states, n_actions, gamma) else {
        return Err(Error::Parse { line: 0, message: "missing header fields".into() });
    };
    let m = Mdp::from_parts(ns, na, transition, reward, g)?;
    let report = validate_mdp(&m);
    if !report.is_valid() {
        return Err(Error::InvalidMdp(report.to_string()));
    }
    Ok(m)
}
