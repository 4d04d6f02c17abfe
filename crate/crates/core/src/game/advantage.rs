//! Empirical distinguishing advantage of a guess rule in the privacy game.
//!
//! This is a smoke test for privacy, not a certificate: a small advantage
//! for one adversary says nothing about all adversaries.

use rayon::prelude::*;

use crate::error::Result;
use crate::mechanism::Mechanism;
use crate::noise::SeedKey;

use super::{run_game, Adversary, GuessRule, Side};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvantageEstimate {
    /// `|P(guess L | L) - P(guess L | R)|`.
    pub advantage: f64,
    /// Binomial standard error of the difference.
    pub stderr: f64,
    pub p_left_given_left: f64,
    pub p_left_given_right: f64,
    /// Games per side.
    pub trials: usize,
}

/// Seeds of trial `i` on `side` under `master_seed`: (mechanism, adversary).
pub fn trial_seeds(master_seed: u64, side: Side, i: usize) -> (u64, u64) {
    let key = SeedKey::new(master_seed).path(&[side as u64, i as u64]);
    (key.child(0).raw(), key.child(1).raw())
}

/// Plays `trials` games per side with independent seeds and scores `guess`.
///
/// Trials run in parallel; every trial's seeds depend only on
/// `(master_seed, side, i)`, so the estimate does not depend on scheduling.
pub fn estimate_advantage<MF, AF, G>(
    mechanism: MF,
    adversary: AF,
    guess: &G,
    trials: usize,
    master_seed: u64,
) -> Result<AdvantageEstimate>
where
    MF: Fn(u64) -> Result<Box<dyn Mechanism>> + Sync,
    AF: Fn() -> Box<dyn Adversary> + Sync,
    G: GuessRule + Sync + ?Sized,
{
    if trials < 100 {
        log::warn!("advantage estimate from {trials} trials per side is unreliable");
    }
    let left_rate = |side: Side| -> Result<f64> {
        let hits = (0..trials)
            .into_par_iter()
            .map(|i| {
                let (mech_seed, adv_seed) = trial_seeds(master_seed, side, i);
                let mut mech = mechanism(mech_seed)?;
                let mut adv = adversary();
                let view = run_game(&mut mech, &mut adv, side, adv_seed)?;
                Ok(usize::from(guess.guess(&view) == Side::L))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(hits as f64 / trials.max(1) as f64)
    };
    let pl = left_rate(Side::L)?;
    let pr = left_rate(Side::R)?;
    let n = trials.max(1) as f64;
    Ok(AdvantageEstimate {
        advantage: (pl - pr).abs(),
        stderr: (pl * (1.0 - pl) / n + pr * (1.0 - pr) / n).sqrt(),
        p_left_given_left: pl,
        p_left_given_right: pr,
        trials,
    })
}

/// Largest advantage an `(eps, delta)`-DP view allows any guess rule:
/// `(e^eps - 1 + 2 delta) / (e^eps + 1)`.
pub fn dp_advantage_bound(eps: f64, delta: f64) -> f64 {
    ((eps.exp() - 1.0 + 2.0 * delta) / (eps.exp() + 1.0)).min(1.0)
}
