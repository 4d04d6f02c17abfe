//! The adaptive privacy game between a continual-release mechanism and an
//! adversary that picks records online and, once, a challenge pair.
//!
//! Submodules hold the shipped adversaries and guess rules, the proof
//! simulators (as coupling tests), the empirical advantage estimator,
//! transcript serialization, and the lower-bound reduction streams.

pub mod advantage;
pub mod adversary;
pub mod reductions;
pub mod sim;
pub mod transcript;

use std::fmt;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::noise::SeedKey;
use crate::stream::{Answer, Record};

pub use advantage::{estimate_advantage, AdvantageEstimate};
pub use adversary::{
    Adversary, ChallengeFirst, FixedStream, GuessRule, NearestTemplate, RandomAdaptive, ThresholdGuess,
};
pub use sim::{
    run_binary_simulation, run_recompute_simulation, CompOracle, GaussOracle, RecomputeSimParams, TreeSimParams,
};

/// Hidden bit of the game: which challenge record the mechanism receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn pick<'a, T>(self, left: &'a T, right: &'a T) -> &'a T {
        match self {
            Side::L => left,
            Side::R => right,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::L => "L",
            Side::R => "R",
        })
    }
}

/// One adversary message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryMove {
    Regular(Record),
    Challenge { left: Record, right: Record },
}

impl AdversaryMove {
    pub fn is_challenge(&self) -> bool {
        matches!(self, AdversaryMove::Challenge { .. })
    }
}

/// One round of the transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewEntry {
    pub t: usize,
    pub sent: AdversaryMove,
    pub answer: Answer,
}

/// The adversary's view: its randomness (as a seed) plus every message it
/// sent and received.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub adversary_seed: u64,
    pub entries: Vec<ViewEntry>,
}

impl View {
    pub fn answers(&self) -> Vec<Answer> {
        self.entries.iter().map(|e| e.answer).collect()
    }

    /// Timestep of the challenge round.
    pub fn challenge_time(&self) -> Option<usize> {
        self.entries.iter().find(|e| e.sent.is_challenge()).map(|e| e.t)
    }

    /// Equality with answers compared bit for bit.
    pub fn bit_eq(&self, other: &View) -> bool {
        self.adversary_seed == other.adversary_seed
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.t == b.t && a.sent == b.sent && a.answer.bit_eq(&b.answer))
    }
}

/// The adversary's private random source for one game.
pub fn adversary_rng(seed: u64) -> impl RngCore {
    SeedKey::new(seed).child(0xad).rng()
}

/// Validates one move against the game rules so far.
pub(crate) fn check_move(t: usize, d: usize, mv: &AdversaryMove, challenged: bool) -> Result<()> {
    let dims_ok = match mv {
        AdversaryMove::Regular(x) => x.dim() == d,
        AdversaryMove::Challenge { left, right } => left.dim() == d && right.dim() == d,
    };
    if !dims_ok {
        return Err(Error::Protocol {
            t,
            message: format!("record dimension differs from d={d}"),
        });
    }
    if challenged && mv.is_challenge() {
        return Err(Error::Protocol {
            t,
            message: "second challenge in one game".into(),
        });
    }
    Ok(())
}

pub(crate) fn missing_challenge(horizon: usize) -> Error {
    Error::Protocol {
        t: horizon,
        message: "game ended without a challenge".into(),
    }
}

/// Plays the game for `mechanism.horizon()` rounds with the hidden `side`.
///
/// Each round the adversary moves first; the mechanism receives the
/// regular record or the `side` half of the challenge and its answer is
/// appended to the adversary's history.
pub fn run_game<M, A>(mechanism: &mut M, adversary: &mut A, side: Side, adversary_seed: u64) -> Result<View>
where
    M: Mechanism + ?Sized,
    A: Adversary + ?Sized,
{
    if mechanism.t() != 0 {
        return Err(crate::error::invalid("the game needs a fresh mechanism"));
    }
    let horizon = mechanism.horizon();
    let d = mechanism.dim();
    let mut rng = adversary_rng(adversary_seed);
    let mut answers = Vec::with_capacity(horizon);
    let mut entries = Vec::with_capacity(horizon);
    let mut challenged = false;
    for t in 1..=horizon {
        let mv = adversary.next_move(t, &answers, &mut rng);
        check_move(t, d, &mv, challenged)?;
        let answer = match &mv {
            AdversaryMove::Regular(x) => mechanism.step(x)?,
            AdversaryMove::Challenge { left, right } => {
                challenged = true;
                mechanism.step(side.pick(left, right))?
            }
        };
        answers.push(answer);
        entries.push(ViewEntry { t, sent: mv, answer });
    }
    if !challenged {
        return Err(missing_challenge(horizon));
    }
    Ok(View {
        adversary_seed,
        entries,
    })
}
