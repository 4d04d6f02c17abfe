//! The privacy-proof simulators, runnable as coupling tests.
//!
//! Each simulator plays the adversary's side of the game without knowing
//! the hidden side. Everything that depends on the challenge record is
//! obtained from an ideal oracle that does know it:
//!
//! * [`GaussOracle`] answers `(x_L, x_R)` with `x_side + Z` for the tree
//!   simulator, at most `log2 T' + 1` times.
//! * [`CompOracle`] answers two neighbouring prefixes with a noisy target
//!   evaluation on the `side` one, at most `m` times.
//!
//! Coupling map: the tree mechanism draws node `[lo:hi]`'s noise from the
//! stream keyed by `(seed, lo, hi)`. The simulator draws noise for nodes
//! not containing `t*` from the same keys, and the `i`-th oracle query is
//! labelled with the `i`-th node containing `t*` in completion order, whose
//! key the oracle uses. Recompute stages are keyed by `(seed, k)` in both
//! worlds. Under this map the simulated view equals the real view bit for
//! bit, which is the checkable form of "identically distributed".

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, Query};
use crate::noise::{tree_levels, NoiseKind};
use crate::recompute::{evaluate_stage, recompute_stage, stage_count, RecomputeMechanism, StageNoise, Target};
use crate::stream::{Answer, ColumnSums, Record};
use crate::tree::{answer_from_sums, node_noise, nodes_completed_at, nodes_containing, prefix_from_nodes, Interval};

use super::{adversary_rng, check_move, missing_challenge, Adversary, AdversaryMove, Side, View, ViewEntry};

/// Parameters shared by the tree mechanism and its simulator.
#[derive(Clone, Copy, Debug)]
pub struct TreeSimParams {
    pub horizon: usize,
    pub d: usize,
    pub query: Query,
    pub noise: NoiseKind,
    pub mech_seed: u64,
}

/// Ideal mechanism holding the hidden side for the tree simulator.
#[derive(Debug)]
pub struct GaussOracle {
    side: Side,
    noise: NoiseKind,
    seed: u64,
    max_queries: usize,
    queries: usize,
}

impl GaussOracle {
    pub fn new(side: Side, noise: NoiseKind, seed: u64, max_queries: usize) -> Self {
        GaussOracle {
            side,
            noise,
            seed,
            max_queries,
            queries: 0,
        }
    }

    /// `x_side + Z` with `Z` keyed by `label` (the node the answer is for).
    pub fn query(&mut self, t: usize, label: Interval, left: &Record, right: &Record) -> Result<Vec<f64>> {
        if self.queries == self.max_queries {
            return Err(Error::Protocol {
                t,
                message: format!("more than {} oracle queries", self.max_queries),
            });
        }
        self.queries += 1;
        let x = self.side.pick(left, right);
        let z = node_noise(self.seed, label, x.dim(), &self.noise);
        Ok(x.bits()
            .iter()
            .zip(z)
            .map(|(&b, z)| f64::from(u8::from(b)) + z)
            .collect())
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

/// Result of a simulation: the adversary's view and the oracle query count.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub view: View,
    pub oracle_queries: usize,
}

/// Runs the tree simulator against `adversary`; `side` is visible only to
/// the oracle.
pub fn run_binary_simulation<A: Adversary + ?Sized>(
    params: &TreeSimParams,
    adversary: &mut A,
    side: Side,
    adversary_seed: u64,
) -> Result<SimOutcome> {
    let TreeSimParams {
        horizon,
        d,
        query,
        noise,
        mech_seed,
    } = *params;
    let padded = horizon.next_power_of_two();
    let levels = tree_levels(horizon) as usize;
    let mut oracle = GaussOracle::new(side, noise, mech_seed, levels);
    let mut rng = adversary_rng(adversary_seed);

    // Exact sums of the open node per level, never including x_{t*}.
    let mut partial = vec![vec![0u64; d]; levels];
    let mut nodes: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut challenge: Option<usize> = None;
    let mut responses: Vec<Vec<f64>> = Vec::new();
    let mut next_response = 0;

    let mut answers = Vec::with_capacity(horizon);
    let mut entries = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mv = adversary.next_move(t, &answers, &mut rng);
        check_move(t, d, &mv, challenge.is_some())?;
        match &mv {
            AdversaryMove::Regular(x) => {
                for acc in &mut partial {
                    for (s, &b) in acc.iter_mut().zip(x.bits()) {
                        *s += u64::from(b);
                    }
                }
            }
            AdversaryMove::Challenge { left, right } => {
                challenge = Some(t);
                for node in nodes_containing(t, padded) {
                    responses.push(oracle.query(t, node, left, right)?);
                }
            }
        }
        for node in nodes_completed_at(t, padded) {
            let level = node.len().trailing_zeros() as usize;
            let acc = &mut partial[level];
            let extra = match challenge {
                Some(ts) if node.contains(ts) => {
                    next_response += 1;
                    responses[next_response - 1].clone()
                }
                _ => node_noise(mech_seed, node, d, &noise),
            };
            nodes[level].extend(acc.iter().zip(&extra).map(|(&s, z)| s as f64 + z));
            acc.iter_mut().for_each(|s| *s = 0);
        }
        let sums = prefix_from_nodes(t, d, |node| {
            let level = node.len().trailing_zeros() as usize;
            let idx = (node.lo - 1) >> level;
            &nodes[level][idx * d..(idx + 1) * d]
        });
        let answer = answer_from_sums(query, &sums);
        answers.push(answer);
        entries.push(ViewEntry { t, sent: mv, answer });
    }
    if challenge.is_none() {
        return Err(missing_challenge(horizon));
    }
    Ok(SimOutcome {
        view: View {
            adversary_seed,
            entries,
        },
        oracle_queries: oracle.queries(),
    })
}

/// Parameters shared by the recompute mechanism and its simulator.
#[derive(Clone, Debug)]
pub struct RecomputeSimParams {
    pub horizon: usize,
    pub d: usize,
    pub period: usize,
    pub target: Target,
    pub noise: StageNoise,
    pub mech_seed: u64,
}

impl RecomputeSimParams {
    pub fn build_mechanism(&self) -> Result<RecomputeMechanism> {
        RecomputeMechanism::new(
            self.horizon,
            self.d,
            self.period,
            self.target.clone(),
            self.noise,
            self.mech_seed,
        )
    }
}

/// Ideal mechanism for the recompute simulator: evaluates the target on the
/// `side` one of two neighbouring prefixes.
#[derive(Debug)]
pub struct CompOracle {
    side: Side,
    target: Target,
    noise: StageNoise,
    seed: u64,
    max_queries: usize,
    queries: usize,
}

impl CompOracle {
    pub fn new(side: Side, target: Target, noise: StageNoise, seed: u64, max_queries: usize) -> Self {
        CompOracle {
            side,
            target,
            noise,
            seed,
            max_queries,
            queries: 0,
        }
    }

    /// Noisy target value of the `side` prefix, labelled with its stage.
    pub fn query(&mut self, t: usize, stage: usize, left: &ColumnSums, right: &ColumnSums) -> Result<Answer> {
        if self.queries == self.max_queries {
            return Err(Error::Protocol {
                t,
                message: format!("more than {} oracle queries", self.max_queries),
            });
        }
        self.queries += 1;
        evaluate_stage(&self.target, &self.noise, self.side.pick(left, right), self.seed, stage)
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

/// Runs the recompute simulator: the real mechanism before `t*`, oracle
/// queries on the two neighbouring prefixes at every later recomputation.
pub fn run_recompute_simulation<A: Adversary + ?Sized>(
    params: &RecomputeSimParams,
    adversary: &mut A,
    side: Side,
    adversary_seed: u64,
) -> Result<SimOutcome> {
    let horizon = params.horizon;
    let d = params.d;
    let stages = stage_count(horizon, params.period)?;
    let mut oracle = CompOracle::new(side, params.target.clone(), params.noise, params.mech_seed, stages);
    let mut before = params.build_mechanism()?;
    let mut rng = adversary_rng(adversary_seed);

    // After t*: the records other than the challenge, and the two halves.
    let mut others = ColumnSums::zeros(d);
    let mut pair: Option<(Record, Record)> = None;
    let mut cached: Option<Answer> = None;

    let mut answers = Vec::with_capacity(horizon);
    let mut entries = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mv = adversary.next_move(t, &answers, &mut rng);
        check_move(t, d, &mv, pair.is_some())?;
        let answer = match (&mv, &pair) {
            (AdversaryMove::Regular(x), None) => before.step(x)?,
            (mv, _) => {
                match mv {
                    AdversaryMove::Regular(x) => others.add(x)?,
                    AdversaryMove::Challenge { left, right } => {
                        others = before.live_sums().clone();
                        cached = before.cached_answer();
                        pair = Some((left.clone(), right.clone()));
                    }
                }
                let (left, right) = pair.as_ref().expect("challenge seen");
                if let Some(k) = recompute_stage(t, params.period, stages) {
                    let mut yl = others.clone();
                    yl.add(left)?;
                    let mut yr = others.clone();
                    yr.add(right)?;
                    cached = Some(oracle.query(t, k, &yl, &yr)?);
                }
                cached.expect("t = 1 always recomputes")
            }
        };
        answers.push(answer);
        entries.push(ViewEntry { t, sent: mv, answer });
    }
    if pair.is_none() {
        return Err(missing_challenge(horizon));
    }
    Ok(SimOutcome {
        view: View {
            adversary_seed,
            entries,
        },
        oracle_queries: oracle.queries(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_game, ChallengeFirst, RandomAdaptive};
    use crate::tree::TreeMechanism;

    #[test]
    fn tree_sim_queries_every_containing_node() {
        let params = TreeSimParams {
            horizon: 2,
            d: 2,
            query: Query::SumSelect,
            noise: NoiseKind::gaussian(1.0).unwrap(),
            mech_seed: 4,
        };
        let mut adv = ChallengeFirst::new(Record::ones(2), Record::zeros(2), Record::zeros(2));
        let out = run_binary_simulation(&params, &mut adv, Side::L, 0).unwrap();
        assert_eq!(out.oracle_queries, 2);
        assert_eq!(out.view.challenge_time(), Some(1));
    }

    #[test]
    fn oracle_refuses_extra_queries() {
        let mut o = GaussOracle::new(Side::R, NoiseKind::None, 0, 1);
        let x = Record::ones(2);
        assert_eq!(
            o.query(1, Interval::new(1, 1), &x, &Record::zeros(2)).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            o.query(1, Interval::new(1, 2), &x, &x),
            Err(Error::Protocol { .. })
        ));
        let zeros = ColumnSums::zeros(1);
        let mut c = CompOracle::new(Side::L, Target::MaxSum, StageNoise::Additive(NoiseKind::None), 0, 0);
        assert!(c.query(1, 1, &zeros, &zeros).is_err());
    }

    #[test]
    fn tree_coupling_smoke() {
        let noise = NoiseKind::gaussian(2.5).unwrap();
        for seed in 0..50u64 {
            for side in [Side::L, Side::R] {
                let params = TreeSimParams {
                    horizon: 12,
                    d: 3,
                    query: Query::MaxSum,
                    noise,
                    mech_seed: seed,
                };
                let mut real = TreeMechanism::new(12, 3, Query::MaxSum, noise, seed).unwrap();
                let game = run_game(&mut real, &mut RandomAdaptive::new(3, 12), side, seed ^ 77).unwrap();
                let sim = run_binary_simulation(&params, &mut RandomAdaptive::new(3, 12), side, seed ^ 77).unwrap();
                assert!(game.bit_eq(&sim.view), "seed {seed} side {side}");
                assert_eq!(sim.oracle_queries, 5);
            }
        }
    }

    #[test]
    fn recompute_coupling_smoke() {
        let noise = StageNoise::Additive(NoiseKind::gaussian(1.7).unwrap());
        for seed in 0..50u64 {
            for side in [Side::L, Side::R] {
                let params = RecomputeSimParams {
                    horizon: 20,
                    d: 2,
                    period: 3,
                    target: Target::MaxSum,
                    noise,
                    mech_seed: seed,
                };
                let mut real = params.build_mechanism().unwrap();
                let game = run_game(&mut real, &mut RandomAdaptive::new(2, 20), side, seed).unwrap();
                let sim = run_recompute_simulation(&params, &mut RandomAdaptive::new(2, 20), side, seed).unwrap();
                assert!(game.bit_eq(&sim.view), "seed {seed} side {side}");
                assert!(sim.oracle_queries <= 6);
            }
        }
    }
}
