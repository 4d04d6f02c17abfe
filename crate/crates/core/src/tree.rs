//! Binary tree mechanism for SumSelect and MaxSum.
//!
//! The horizon is padded to a power of two `T'` and every dyadic interval
//! of `[1:T']` is a node. When a node's interval closes at timestep `t`
//! the mechanism stores its exact column sums plus one fresh noise vector;
//! the released statistic at `t` adds the stored vectors of the dyadic
//! decomposition of `[1:t]`. Each record therefore lands in exactly
//! `log2 T' + 1` noisy releases, at most one per level.
//!
//! Node noise is drawn from the stream keyed by `(seed, lo, hi)` (see
//! [`node_noise`]), so any party holding the seed can reproduce the noise
//! of a given node without replaying the run.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::mechanism::{check_step, Mechanism, Query};
use crate::noise::{tree_lambda, tree_levels, tree_sigma, NoiseKind, PrivacyBudget, SeedKey};
use crate::stream::{argmax_first, Answer, ColumnSums, Record};

/// Inclusive 1-based timestep interval `[lo:hi]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Self {
        debug_assert!(1 <= lo && lo <= hi);
        Interval { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.lo <= t && t <= self.hi
    }

    /// Whether the interval is a node of the complete tree over `padded` leaves.
    pub fn is_dyadic_node(&self, padded: usize) -> bool {
        let len = self.len();
        len.is_power_of_two() && (self.lo - 1).is_multiple_of(len) && self.hi <= padded
    }

    fn level(&self) -> usize {
        self.len().trailing_zeros() as usize
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}]", self.lo, self.hi)
    }
}

/// `[1:t]` as consecutive dyadic intervals of strictly decreasing size,
/// one per set bit of `t`.
pub fn dyadic_decomposition(t: usize) -> Result<Vec<Interval>> {
    if t < 1 {
        return Err(invalid("dyadic decomposition needs t >= 1"));
    }
    let mut out = Vec::with_capacity(t.count_ones() as usize);
    let mut lo = 1;
    for bit in (0..usize::BITS).rev() {
        let size = 1usize << bit;
        if t & size != 0 {
            out.push(Interval::new(lo, lo + size - 1));
            lo += size;
        }
    }
    Ok(out)
}

/// Tree nodes whose interval ends at `t`, smallest first.
pub fn nodes_completed_at(t: usize, padded: usize) -> Vec<Interval> {
    assert!(1 <= t && t <= padded, "timestep {t} outside [1, {padded}]");
    let mut out = Vec::new();
    let mut size = 1;
    while size <= padded && t.is_multiple_of(size) {
        out.push(Interval::new(t - size + 1, t));
        size <<= 1;
    }
    out
}

/// Tree nodes whose interval contains leaf `t`, in completion order
/// (leaf first, root last).
pub fn nodes_containing(t: usize, padded: usize) -> Vec<Interval> {
    assert!(1 <= t && t <= padded, "timestep {t} outside [1, {padded}]");
    let mut out = Vec::new();
    let mut size = 1;
    while size <= padded {
        let lo = (t - 1) / size * size + 1;
        out.push(Interval::new(lo, lo + size - 1));
        size <<= 1;
    }
    out
}

/// The noise scale the tree uses for `budget`.
pub fn tree_noise(d: usize, horizon: usize, budget: PrivacyBudget) -> Result<NoiseKind> {
    match budget {
        PrivacyBudget::Zcdp { rho } => NoiseKind::gaussian(tree_sigma(d, horizon, rho)),
        PrivacyBudget::PureDp { eps } => NoiseKind::laplace(tree_lambda(d, horizon, eps)),
        PrivacyBudget::ApproxDp { .. } => Err(Error::UnsupportedBudget(
            "the tree takes zCDP or pure DP; convert (eps, delta) to rho first".into(),
        )),
    }
}

/// Noise vector of tree node `node` under `seed`.
pub fn node_noise(seed: u64, node: Interval, d: usize, noise: &NoiseKind) -> Vec<f64> {
    if noise.is_none() {
        return vec![0.0; d];
    }
    let mut rng = SeedKey::new(seed).path(&[node.lo as u64, node.hi as u64]).rng();
    noise.sample_vec(d, &mut rng)
}

/// Adds stored node vectors along the dyadic decomposition of `[1:t]`.
pub(crate) fn prefix_from_nodes<'a>(t: usize, d: usize, mut lookup: impl FnMut(Interval) -> &'a [f64]) -> Vec<f64> {
    let mut sum = vec![0.0; d];
    for node in dyadic_decomposition(t).expect("t >= 1") {
        for (s, v) in sum.iter_mut().zip(lookup(node)) {
            *s += v;
        }
    }
    sum
}

pub(crate) fn answer_from_sums(query: Query, sums: &[f64]) -> Answer {
    match query {
        Query::SumSelect => Answer::Index(argmax_first(sums.iter().copied())),
        Query::MaxSum => Answer::Value(sums.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    }
}

/// Binary tree mechanism state.
#[derive(Clone, Debug)]
pub struct TreeMechanism {
    horizon: usize,
    padded: usize,
    d: usize,
    query: Query,
    noise: NoiseKind,
    seed: u64,
    t: usize,
    live: ColumnSums,
    // Exact sums of the currently open node at each level.
    partial: Vec<Vec<u64>>,
    // Completed node vectors per level, `d` values per node, in completion order.
    nodes: Vec<Vec<f64>>,
    last_sums: Vec<f64>,
}

impl TreeMechanism {
    pub fn new(horizon: usize, d: usize, query: Query, noise: NoiseKind, seed: u64) -> Result<Self> {
        if horizon < 1 || d < 1 {
            return Err(invalid("tree needs T >= 1 and d >= 1"));
        }
        let padded = horizon.next_power_of_two();
        let levels = tree_levels(horizon) as usize;
        Ok(TreeMechanism {
            horizon,
            padded,
            d,
            query,
            noise,
            seed,
            t: 0,
            live: ColumnSums::zeros(d),
            partial: vec![vec![0; d]; levels],
            nodes: (0..levels).map(|h| Vec::with_capacity((padded >> h) * d)).collect(),
            last_sums: vec![0.0; d],
        })
    }

    /// Scales the noise from `budget` unless `noise_override` is given.
    pub fn from_budget(
        horizon: usize,
        d: usize,
        query: Query,
        budget: PrivacyBudget,
        noise_override: Option<NoiseKind>,
        seed: u64,
    ) -> Result<Self> {
        let noise = match noise_override {
            Some(n) => n,
            None => tree_noise(d, horizon, budget)?,
        };
        Self::new(horizon, d, query, noise, seed)
    }

    pub fn padded_horizon(&self) -> usize {
        self.padded
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn query(&self) -> Query {
        self.query
    }

    /// Exact column sums of the records consumed so far.
    pub fn live_sums(&self) -> &ColumnSums {
        &self.live
    }

    /// Noisy prefix sums behind the most recent answer.
    pub fn noisy_prefix_sums(&self) -> &[f64] {
        &self.last_sums
    }

    /// Stored vector of a completed node.
    pub fn node_value(&self, node: Interval) -> Option<&[f64]> {
        if !node.is_dyadic_node(self.padded) || node.hi > self.t {
            return None;
        }
        let level = node.level();
        let idx = (node.lo - 1) >> level;
        self.nodes[level].get(idx * self.d..(idx + 1) * self.d)
    }

    /// All completed nodes, level by level.
    pub fn stored_nodes(&self) -> Vec<Interval> {
        let mut out = Vec::new();
        for (level, values) in self.nodes.iter().enumerate() {
            let size = 1 << level;
            for i in 0..values.len() / self.d {
                out.push(Interval::new(i * size + 1, (i + 1) * size));
            }
        }
        out
    }
}

impl Mechanism for TreeMechanism {
    fn dim(&self) -> usize {
        self.d
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn t(&self) -> usize {
        self.t
    }

    fn step(&mut self, x: &Record) -> Result<Answer> {
        check_step(self.t, self.horizon, self.d, x)?;
        self.t += 1;
        let t = self.t;
        self.live.add(x)?;
        for acc in &mut self.partial {
            for (s, &b) in acc.iter_mut().zip(x.bits()) {
                *s += u64::from(b);
            }
        }
        for node in nodes_completed_at(t, self.padded) {
            let level = node.level();
            let noise = node_noise(self.seed, node, self.d, &self.noise);
            let acc = &mut self.partial[level];
            self.nodes[level].extend(acc.iter().zip(&noise).map(|(&s, z)| s as f64 + z));
            acc.iter_mut().for_each(|s| *s = 0);
        }
        let d = self.d;
        let nodes = &self.nodes;
        self.last_sums = prefix_from_nodes(t, d, |node| {
            let level = node.level();
            let idx = (node.lo - 1) >> level;
            &nodes[level][idx * d..(idx + 1) * d]
        });
        Ok(answer_from_sums(self.query, &self.last_sums))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::run_stream;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval::new(lo, hi)
    }

    fn records(rows: &[&str]) -> Vec<Record> {
        rows.iter().map(|r| r.parse().unwrap()).collect()
    }

    #[test]
    fn dyadic_examples() {
        assert_eq!(dyadic_decomposition(7).unwrap(), vec![iv(1, 4), iv(5, 6), iv(7, 7)]);
        assert_eq!(dyadic_decomposition(1).unwrap(), vec![iv(1, 1)]);
        assert_eq!(dyadic_decomposition(6).unwrap(), vec![iv(1, 4), iv(5, 6)]);
        assert!(dyadic_decomposition(0).is_err());
    }

    #[test]
    fn completed_node_examples() {
        assert_eq!(nodes_completed_at(4, 8), vec![iv(4, 4), iv(3, 4), iv(1, 4)]);
        assert_eq!(nodes_completed_at(1, 8), vec![iv(1, 1)]);
        assert_eq!(nodes_completed_at(8, 8), vec![iv(8, 8), iv(7, 8), iv(5, 8), iv(1, 8)]);
        // Capped by the tree depth.
        assert_eq!(nodes_completed_at(4, 4).len(), 3);
    }

    #[test]
    fn containing_nodes() {
        assert_eq!(nodes_containing(1, 2), vec![iv(1, 1), iv(1, 2)]);
        assert_eq!(nodes_containing(6, 8), vec![iv(6, 6), iv(5, 6), iv(5, 8), iv(1, 8)]);
    }

    #[test]
    fn init_pads_and_scales() {
        let budget = PrivacyBudget::zcdp(0.5).unwrap();
        let m = TreeMechanism::from_budget(6, 4, Query::SumSelect, budget, None, 0).unwrap();
        assert_eq!(m.padded_horizon(), 8);
        let m = TreeMechanism::from_budget(8, 4, Query::SumSelect, budget, None, 0).unwrap();
        assert_eq!(m.padded_horizon(), 8);
        assert_eq!(m.noise(), NoiseKind::Gaussian { sigma: 4.0 });
        let approx = PrivacyBudget::approx_dp(1.0, 1e-6).unwrap();
        assert!(matches!(
            TreeMechanism::from_budget(8, 4, Query::SumSelect, approx, None, 0),
            Err(Error::UnsupportedBudget(_))
        ));
        let pure = PrivacyBudget::pure_dp(1.0).unwrap();
        let m = TreeMechanism::from_budget(8, 2, Query::MaxSum, pure, None, 0).unwrap();
        assert_eq!(m.noise(), NoiseKind::Laplace { scale: 8.0 });
    }

    #[test]
    fn noiseless_answers() {
        let xs = records(&["10", "10", "01"]);
        let mut sel = TreeMechanism::new(3, 2, Query::SumSelect, NoiseKind::None, 0).unwrap();
        let got = run_stream(&mut sel, &xs).unwrap();
        assert_eq!(got, vec![Answer::Index(1); 3]);
        let mut max = TreeMechanism::new(3, 2, Query::MaxSum, NoiseKind::None, 0).unwrap();
        let got = run_stream(&mut max, &xs).unwrap();
        assert_eq!(got, vec![Answer::Value(1.0), Answer::Value(2.0), Answer::Value(2.0)]);

        let zeros = records(&["000"; 5]);
        let mut sel = TreeMechanism::new(5, 3, Query::SumSelect, NoiseKind::None, 0).unwrap();
        assert!(run_stream(&mut sel, &zeros)
            .unwrap()
            .iter()
            .all(|a| *a == Answer::Index(1)));
    }

    #[test]
    fn single_column_always_selects_one() {
        let noise = NoiseKind::gaussian(10.0).unwrap();
        let mut m = TreeMechanism::new(16, 1, Query::SumSelect, noise, 5).unwrap();
        for t in 0..16 {
            let x = Record::new(vec![t % 3 == 0]).unwrap();
            assert_eq!(m.step(&x).unwrap(), Answer::Index(1));
        }
    }

    #[test]
    fn horizon_and_dimension_errors() {
        let mut m = TreeMechanism::new(2, 2, Query::SumSelect, NoiseKind::None, 0).unwrap();
        assert!(matches!(
            m.step(&"1".parse().unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        m.step(&"10".parse().unwrap()).unwrap();
        m.step(&"10".parse().unwrap()).unwrap();
        assert!(matches!(
            m.step(&"10".parse().unwrap()),
            Err(Error::HorizonExhausted { horizon: 2 })
        ));
    }

    #[test]
    fn stored_nodes_match_completion_rule() {
        let mut m = TreeMechanism::new(6, 2, Query::MaxSum, NoiseKind::None, 0).unwrap();
        for x in records(&["11", "01", "10", "11", "00", "01"]) {
            m.step(&x).unwrap();
            let t = m.t();
            for node in m.stored_nodes() {
                assert!(node.hi <= t && node.is_dyadic_node(8));
            }
        }
        // Padded leaves 7 and 8 never complete.
        assert!(m.node_value(iv(7, 8)).is_none());
        assert!(m.node_value(iv(1, 8)).is_none());
        assert_eq!(m.node_value(iv(1, 4)).unwrap(), &[3.0, 3.0]);
        assert_eq!(m.node_value(iv(5, 6)).unwrap(), &[0.0, 1.0]);
        assert_eq!(m.stored_nodes().len(), 6 + 3 + 1);
    }

    #[test]
    fn node_noise_is_reused_verbatim() {
        let noise = NoiseKind::gaussian(3.0).unwrap();
        let mut m = TreeMechanism::new(8, 3, Query::MaxSum, noise, 99).unwrap();
        let x: Record = "101".parse().unwrap();
        m.step(&x).unwrap();
        m.step(&x).unwrap();
        let first = m.node_value(iv(1, 2)).unwrap().to_vec();
        let expected: Vec<f64> = node_noise(99, iv(1, 2), 3, &noise)
            .iter()
            .zip([2.0, 0.0, 2.0])
            .map(|(z, s)| s + z)
            .collect();
        assert_eq!(first, expected);
        for _ in 0..6 {
            m.step(&x).unwrap();
            assert_eq!(m.node_value(iv(1, 2)).unwrap(), first.as_slice());
        }
    }
}
