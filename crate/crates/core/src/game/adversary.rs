//! Adversary and guess-rule interfaces, plus the implementations the test
//! harness and the CLI use.

use rand::{Rng, RngCore};

use crate::error::{invalid, Result};
use crate::stream::{Answer, Record};

use super::{AdversaryMove, Side, View};

/// An adaptive adversary. It sees every earlier answer but never the
/// mechanism's coins; given the same randomness and answer history it must
/// produce the same move.
pub trait Adversary {
    /// Move for round `t` (1-based); `answers` holds `a_1..a_{t-1}`.
    fn next_move(&mut self, t: usize, answers: &[Answer], rng: &mut dyn RngCore) -> AdversaryMove;
}

impl<A: Adversary + ?Sized> Adversary for Box<A> {
    fn next_move(&mut self, t: usize, answers: &[Answer], rng: &mut dyn RngCore) -> AdversaryMove {
        (**self).next_move(t, answers, rng)
    }
}

/// Nonadaptive: replays a fixed stream, swapping in a challenge pair at `t*`.
#[derive(Clone, Debug)]
pub struct FixedStream {
    stream: Vec<Record>,
    challenge_at: usize,
    left: Record,
    right: Record,
}

impl FixedStream {
    pub fn new(stream: Vec<Record>, challenge_at: usize, left: Record, right: Record) -> Result<Self> {
        if !(1..=stream.len()).contains(&challenge_at) {
            return Err(invalid(format!(
                "challenge time {challenge_at} outside [1, {}]",
                stream.len()
            )));
        }
        Ok(FixedStream {
            stream,
            challenge_at,
            left,
            right,
        })
    }
}

impl Adversary for FixedStream {
    fn next_move(&mut self, t: usize, _answers: &[Answer], _rng: &mut dyn RngCore) -> AdversaryMove {
        if t == self.challenge_at {
            AdversaryMove::Challenge {
                left: self.left.clone(),
                right: self.right.clone(),
            }
        } else {
            AdversaryMove::Regular(self.stream[t - 1].clone())
        }
    }
}

/// Challenges on the first round, then sends a constant filler record.
#[derive(Clone, Debug)]
pub struct ChallengeFirst {
    left: Record,
    right: Record,
    filler: Record,
}

impl ChallengeFirst {
    pub fn new(left: Record, right: Record, filler: Record) -> Self {
        ChallengeFirst { left, right, filler }
    }
}

impl Adversary for ChallengeFirst {
    fn next_move(&mut self, t: usize, _answers: &[Answer], _rng: &mut dyn RngCore) -> AdversaryMove {
        if t == 1 {
            AdversaryMove::Challenge {
                left: self.left.clone(),
                right: self.right.clone(),
            }
        } else {
            AdversaryMove::Regular(self.filler.clone())
        }
    }
}

/// Randomized adaptive adversary used by the coupling tests.
///
/// It draws the challenge time uniformly on its first move. Each regular
/// record biases its bits toward the last answer: the selected attribute
/// (selection answers) or the parity of the rounded value (MaxSum answers)
/// is set with probability 0.8, other bits with probability 0.4.
#[derive(Clone, Debug)]
pub struct RandomAdaptive {
    d: usize,
    horizon: usize,
    equal_challenge: bool,
    challenge_at: Option<usize>,
}

impl RandomAdaptive {
    pub fn new(d: usize, horizon: usize) -> Self {
        assert!(d >= 1 && horizon >= 1);
        RandomAdaptive {
            d,
            horizon,
            equal_challenge: false,
            challenge_at: None,
        }
    }

    /// Uses identical left and right challenge records.
    pub fn equal_challenge(mut self) -> Self {
        self.equal_challenge = true;
        self
    }

    fn biased_record(&self, favoured: Option<usize>, rng: &mut dyn RngCore) -> Record {
        let bits = (0..self.d)
            .map(|j| {
                let p = if Some(j) == favoured { 0.8 } else { 0.4 };
                rng.random_bool(p)
            })
            .collect();
        Record::new(bits).expect("d >= 1")
    }

    fn uniform_record(&self, rng: &mut dyn RngCore) -> Record {
        Record::new((0..self.d).map(|_| rng.random_bool(0.5)).collect()).expect("d >= 1")
    }
}

impl Adversary for RandomAdaptive {
    fn next_move(&mut self, t: usize, answers: &[Answer], rng: &mut dyn RngCore) -> AdversaryMove {
        let horizon = self.horizon;
        let challenge_at = *self.challenge_at.get_or_insert_with(|| rng.random_range(1..=horizon));
        if t == challenge_at {
            let left = self.uniform_record(rng);
            let right = if self.equal_challenge {
                left.clone()
            } else {
                self.uniform_record(rng)
            };
            return AdversaryMove::Challenge { left, right };
        }
        let favoured = answers.last().map(|a| match *a {
            Answer::Index(i) => (i - 1) % self.d,
            Answer::Value(v) => (v.round().abs() as usize) % self.d,
        });
        AdversaryMove::Regular(self.biased_record(favoured, rng))
    }
}

/// Maps an adversary's view to a guess of the hidden side.
pub trait GuessRule {
    fn guess(&self, view: &View) -> Side;
}

impl<F: Fn(&View) -> Side> GuessRule for F {
    fn guess(&self, view: &View) -> Side {
        self(view)
    }
}

fn numeric(a: Answer) -> f64 {
    match a {
        Answer::Index(i) => i as f64,
        Answer::Value(v) => v,
    }
}

/// Guesses `L` when the answer at round `at` (default: the last round)
/// exceeds `threshold`, or does not exceed it when `left_if_above` is false.
#[derive(Clone, Copy, Debug)]
pub struct ThresholdGuess {
    pub at: Option<usize>,
    pub threshold: f64,
    pub left_if_above: bool,
}

impl ThresholdGuess {
    pub fn last_answer(threshold: f64, left_if_above: bool) -> Self {
        ThresholdGuess {
            at: None,
            threshold,
            left_if_above,
        }
    }
}

impl GuessRule for ThresholdGuess {
    fn guess(&self, view: &View) -> Side {
        let entry = match self.at {
            Some(t) => &view.entries[t - 1],
            None => view.entries.last().expect("nonempty view"),
        };
        let above = numeric(entry.answer) > self.threshold;
        if above == self.left_if_above {
            Side::L
        } else {
            Side::R
        }
    }
}

/// Compares the whole answer sequence with the expected sequences under
/// each side and guesses the nearer one (squared distance; ties go to `L`).
#[derive(Clone, Debug)]
pub struct NearestTemplate {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl NearestTemplate {
    pub fn new(left: Vec<Answer>, right: Vec<Answer>) -> Self {
        NearestTemplate {
            left: left.into_iter().map(numeric).collect(),
            right: right.into_iter().map(numeric).collect(),
        }
    }
}

impl GuessRule for NearestTemplate {
    fn guess(&self, view: &View) -> Side {
        let dist = |template: &[f64]| -> f64 {
            view.entries
                .iter()
                .zip(template)
                .map(|(e, x)| (numeric(e.answer) - x).powi(2))
                .sum()
        };
        if dist(&self.left) <= dist(&self.right) {
            Side::L
        } else {
            Side::R
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::adversary_rng;

    #[test]
    fn random_adaptive_is_deterministic_under_seed() {
        let play = || {
            let mut adv = RandomAdaptive::new(4, 20);
            let mut rng = adversary_rng(17);
            let answers: Vec<Answer> = (1..=20).map(|i| Answer::Index(i % 4 + 1)).collect();
            (1..=20)
                .map(|t| adv.next_move(t, &answers[..t - 1], &mut rng))
                .collect::<Vec<_>>()
        };
        let a = play();
        assert_eq!(a, play());
        assert_eq!(a.iter().filter(|m| m.is_challenge()).count(), 1);
    }

    #[test]
    fn fixed_stream_validates_challenge_time() {
        let s = vec![Record::zeros(2); 3];
        assert!(FixedStream::new(s.clone(), 0, Record::zeros(2), Record::ones(2)).is_err());
        assert!(FixedStream::new(s.clone(), 4, Record::zeros(2), Record::ones(2)).is_err());
        assert!(FixedStream::new(s, 3, Record::zeros(2), Record::ones(2)).is_ok());
    }

    fn view_of(answers: &[Answer]) -> View {
        View {
            adversary_seed: 0,
            entries: answers
                .iter()
                .enumerate()
                .map(|(i, &answer)| super::super::ViewEntry {
                    t: i + 1,
                    sent: AdversaryMove::Regular(Record::zeros(1)),
                    answer,
                })
                .collect(),
        }
    }

    #[test]
    fn guess_rules() {
        let v = view_of(&[Answer::Value(0.2), Answer::Value(0.9)]);
        assert_eq!(ThresholdGuess::last_answer(0.5, true).guess(&v), Side::L);
        assert_eq!(ThresholdGuess::last_answer(0.5, false).guess(&v), Side::R);
        let first = ThresholdGuess {
            at: Some(1),
            threshold: 0.5,
            left_if_above: true,
        };
        assert_eq!(first.guess(&v), Side::R);

        let nt = NearestTemplate::new(
            vec![Answer::Value(1.0), Answer::Value(1.0)],
            vec![Answer::Value(0.0), Answer::Value(0.0)],
        );
        assert_eq!(nt.guess(&v), Side::L);
        assert_eq!(nt.guess(&view_of(&[Answer::Value(0.1), Answer::Value(0.2)])), Side::R);
    }
}
