//! Recompute-at-regular-intervals mechanism.
//!
//! With period `r` the mechanism runs `m = floor((T-1)/r)` stages. At the
//! first timestep of stage `k` (`t = (k-1)r + 1`) it releases a fresh noisy
//! evaluation of the target on the whole prefix and republishes that value
//! for the rest of the stage. Timesteps after `m r` keep the stage-`m`
//! answer through `T`.
//!
//! Value targets get additive Gaussian (`sigma = sqrt(m / 2 rho)`) or
//! Laplace (`m / eps`) noise per stage; the selection target uses the
//! exponential mechanism with `eps' = sqrt(2 rho / m)` or `eps / m`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::mechanism::{check_step, Mechanism, Query};
use crate::noise::{gumbel_argmax, NoiseKind, PrivacyBudget, SeedKey};
use crate::stream::{Answer, ColumnSums, Record};

/// A caller-supplied statistic of the prefix, declared to have sensitivity 1
/// under changing one record. The declaration is not checked.
pub type Statistic = Arc<dyn Fn(&ColumnSums) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Target {
    MaxSum,
    Select,
    Statistic(Statistic),
}

impl Target {
    pub fn is_selection(&self) -> bool {
        matches!(self, Target::Select)
    }

    /// Exact target value (index for `Select`).
    pub fn exact(&self, sums: &ColumnSums) -> Answer {
        match self {
            Target::MaxSum => Answer::Value(sums.max() as f64),
            Target::Select => Answer::Index(sums.argmax()),
            Target::Statistic(f) => Answer::Value(f(sums)),
        }
    }
}

impl From<Query> for Target {
    fn from(q: Query) -> Self {
        match q {
            Query::MaxSum => Target::MaxSum,
            Query::SumSelect => Target::Select,
        }
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::MaxSum => f.write_str("MaxSum"),
            Target::Select => f.write_str("Select"),
            Target::Statistic(_) => f.write_str("Statistic(..)"),
        }
    }
}

/// Randomization applied at each recomputation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageNoise {
    /// Additive noise on the target value, or on each column sum before the
    /// argmax for the selection target. `NoiseKind::None` is exact.
    Additive(NoiseKind),
    /// Exponential mechanism over column sums with per-stage `eps'`.
    Exponential { eps: f64 },
}

/// Per-stage randomization for `budget` spread over `stages` recomputations.
pub fn stage_noise(target: &Target, stages: usize, budget: PrivacyBudget) -> Result<StageNoise> {
    let m = stages as f64;
    match (budget, target.is_selection()) {
        (PrivacyBudget::Zcdp { rho }, false) => {
            Ok(StageNoise::Additive(NoiseKind::gaussian((m / (2.0 * rho)).sqrt())?))
        }
        (PrivacyBudget::Zcdp { rho }, true) => Ok(StageNoise::Exponential {
            eps: (2.0 * rho / m).sqrt(),
        }),
        (PrivacyBudget::PureDp { eps }, false) => Ok(StageNoise::Additive(NoiseKind::laplace(m / eps)?)),
        (PrivacyBudget::PureDp { eps }, true) => Ok(StageNoise::Exponential { eps: eps / m }),
        (PrivacyBudget::ApproxDp { .. }, _) => Err(Error::UnsupportedBudget(
            "recompute takes zCDP or pure DP; convert (eps, delta) to rho first".into(),
        )),
    }
}

/// Samples an index with probability proportional to `exp(eps * q_j / 2)`
/// over qualities `q_j = sums[j]` (sensitivity 1).
pub fn exponential_select<R: Rng + ?Sized>(sums: &ColumnSums, eps: f64, rng: &mut R) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("exponential mechanism needs eps > 0, got {eps}")));
    }
    if sums.dim() == 0 {
        return Err(invalid("exponential mechanism over an empty index set"));
    }
    let q: Vec<f64> = sums.as_slice().iter().map(|&s| s as f64).collect();
    Ok(gumbel_argmax(&q, 2.0 / eps, rng))
}

/// Noise key of stage `k` under `seed`.
pub fn stage_key(seed: u64, stage: usize) -> SeedKey {
    SeedKey::new(seed).child(stage as u64)
}

/// One noisy recomputation of `target` on `sums` using stage `stage`'s noise.
pub fn evaluate_stage(
    target: &Target,
    noise: &StageNoise,
    sums: &ColumnSums,
    seed: u64,
    stage: usize,
) -> Result<Answer> {
    let mut rng = stage_key(seed, stage).rng();
    Ok(match (target, noise) {
        (Target::Select, StageNoise::Exponential { eps }) => Answer::Index(exponential_select(sums, *eps, &mut rng)?),
        (Target::Select, StageNoise::Additive(kind)) => {
            if kind.is_none() {
                Answer::Index(sums.argmax())
            } else {
                let noisy: Vec<f64> = sums
                    .as_slice()
                    .iter()
                    .map(|&s| s as f64 + kind.sample(&mut rng))
                    .collect();
                Answer::Index(crate::stream::argmax_first(noisy))
            }
        }
        (_, StageNoise::Additive(kind)) => {
            let exact = target.exact(sums).as_value().expect("value target");
            Answer::Value(exact + kind.sample(&mut rng))
        }
        (_, StageNoise::Exponential { .. }) => {
            return Err(invalid("the exponential mechanism only applies to selection"))
        }
    })
}

/// Stage count `floor((T-1)/r)` for a valid period.
pub fn stage_count(horizon: usize, period: usize) -> Result<usize> {
    if horizon < 2 || period < 1 || period > horizon - 1 {
        return Err(invalid(format!(
            "recompute period must lie in [1, T-1]; got r={period} for T={horizon}"
        )));
    }
    Ok((horizon - 1) / period)
}

/// If `t` starts a stage, its 1-based stage number.
pub fn recompute_stage(t: usize, period: usize, stages: usize) -> Option<usize> {
    let k = (t - 1) / period + 1;
    ((t - 1).is_multiple_of(period) && k <= stages).then_some(k)
}

#[derive(Clone, Debug)]
pub struct RecomputeMechanism {
    horizon: usize,
    d: usize,
    period: usize,
    stages: usize,
    target: Target,
    noise: StageNoise,
    seed: u64,
    t: usize,
    live: ColumnSums,
    cached: Option<Answer>,
    recomputations: usize,
}

impl RecomputeMechanism {
    pub fn new(horizon: usize, d: usize, period: usize, target: Target, noise: StageNoise, seed: u64) -> Result<Self> {
        if d < 1 {
            return Err(invalid("recompute needs d >= 1"));
        }
        let stages = stage_count(horizon, period)?;
        if matches!(noise, StageNoise::Exponential { .. }) && !target.is_selection() {
            return Err(invalid("the exponential mechanism only applies to selection"));
        }
        Ok(RecomputeMechanism {
            horizon,
            d,
            period,
            stages,
            target,
            noise,
            seed,
            t: 0,
            live: ColumnSums::zeros(d),
            cached: None,
            recomputations: 0,
        })
    }

    /// Scales per-stage noise from `budget` over the `floor((T-1)/r)` stages.
    pub fn from_budget(
        horizon: usize,
        d: usize,
        period: usize,
        target: Target,
        budget: PrivacyBudget,
        noise_override: Option<StageNoise>,
        seed: u64,
    ) -> Result<Self> {
        let stages = stage_count(horizon, period)?;
        let noise = match noise_override {
            Some(n) => n,
            None => stage_noise(&target, stages, budget)?,
        };
        Self::new(horizon, d, period, target, noise, seed)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn noise(&self) -> StageNoise {
        self.noise
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Noisy evaluations performed so far.
    pub fn recomputations(&self) -> usize {
        self.recomputations
    }

    pub fn live_sums(&self) -> &ColumnSums {
        &self.live
    }

    pub fn cached_answer(&self) -> Option<Answer> {
        self.cached
    }
}

impl Mechanism for RecomputeMechanism {
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
        self.live.add(x)?;
        if let Some(k) = recompute_stage(self.t, self.period, self.stages) {
            self.cached = Some(evaluate_stage(&self.target, &self.noise, &self.live, self.seed, k)?);
            self.recomputations += 1;
        }
        Ok(self.cached.expect("t = 1 always recomputes"))
    }
}

/// Outcome of choosing the stage count from the accuracy analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Period {
    /// Budget too small to beat the data-independent mechanism.
    Trivial,
    Stages {
        m: usize,
        r: usize,
    },
}

/// Stage count balancing staleness against per-stage noise, and the period
/// `r = ceil(T/m)` clamped to `[1, T-1]`. Logs of `T` and `dT` are base 2.
pub fn optimal_period(horizon: usize, d: usize, budget: PrivacyBudget, target: &Target) -> Period {
    if horizon < 2 {
        return Period::Trivial;
    }
    let t = horizon as f64;
    let log_t = t.log2();
    let log_dt = (d as f64 * t).log2();
    let m = match budget.approx_to_zcdp() {
        PrivacyBudget::Zcdp { rho } if target.is_selection() => {
            if rho <= (log_dt / t).powi(2) {
                return Period::Trivial;
            }
            rho.cbrt() * t.powf(2.0 / 3.0) / log_dt.powf(2.0 / 3.0)
        }
        PrivacyBudget::Zcdp { rho } => {
            if rho <= log_t / (t * t) {
                return Period::Trivial;
            }
            rho.cbrt() * t.powf(2.0 / 3.0) / log_t.cbrt()
        }
        PrivacyBudget::PureDp { eps } => {
            if eps <= log_t / t {
                return Period::Trivial;
            }
            (eps * t / log_t).sqrt()
        }
        PrivacyBudget::ApproxDp { .. } => unreachable!("converted above"),
    };
    let m = m.floor() as usize;
    if m == 0 {
        return Period::Trivial;
    }
    let r = horizon.div_ceil(m).clamp(1, horizon - 1);
    Period::Stages { m, r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::run_stream;

    fn ones(n: usize) -> Vec<Record> {
        vec![Record::ones(1); n]
    }

    #[test]
    fn stage_counts() {
        assert_eq!(stage_count(101, 10).unwrap(), 10);
        assert_eq!(stage_count(11, 10).unwrap(), 1);
        assert!(stage_count(11, 11).is_err());
        assert!(stage_count(11, 0).is_err());
        assert!(stage_count(1, 1).is_err());
    }

    #[test]
    fn gaussian_stage_scale() {
        // T=5, r=1 gives m=4 stages.
        let m = RecomputeMechanism::from_budget(5, 1, 1, Target::MaxSum, PrivacyBudget::zcdp(0.5).unwrap(), None, 0)
            .unwrap();
        assert_eq!(m.stages(), 4);
        assert_eq!(m.noise(), StageNoise::Additive(NoiseKind::Gaussian { sigma: 2.0 }));

        let sel = stage_noise(&Target::Select, 4, PrivacyBudget::zcdp(0.5).unwrap()).unwrap();
        assert_eq!(sel, StageNoise::Exponential { eps: 0.5 });
        let pure = stage_noise(&Target::MaxSum, 4, PrivacyBudget::pure_dp(2.0).unwrap()).unwrap();
        assert_eq!(pure, StageNoise::Additive(NoiseKind::Laplace { scale: 2.0 }));
        let pure_sel = stage_noise(&Target::Select, 4, PrivacyBudget::pure_dp(2.0).unwrap()).unwrap();
        assert_eq!(pure_sel, StageNoise::Exponential { eps: 0.5 });
    }

    #[test]
    fn noiseless_maxsum_holds_between_recomputations() {
        let exact = StageNoise::Additive(NoiseKind::None);
        let mut m = RecomputeMechanism::new(5, 1, 2, Target::MaxSum, exact, 0).unwrap();
        let got = run_stream(&mut m, &ones(4)).unwrap();
        let want: Vec<_> = [1.0, 1.0, 3.0, 3.0].into_iter().map(Answer::Value).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn tail_republishes_last_stage() {
        // T=7, r=2: m=3 stages at t=1,3,5; t=6,7 hold the t=5 answer.
        let exact = StageNoise::Additive(NoiseKind::None);
        let mut m = RecomputeMechanism::new(7, 1, 2, Target::MaxSum, exact, 0).unwrap();
        let got = run_stream(&mut m, &ones(7)).unwrap();
        let want: Vec<_> = [1.0, 1.0, 3.0, 3.0, 5.0, 5.0, 5.0]
            .into_iter()
            .map(Answer::Value)
            .collect();
        assert_eq!(got, want);
        assert_eq!(m.recomputations(), 3);
    }

    #[test]
    fn first_step_recomputes() {
        let noise = StageNoise::Additive(NoiseKind::gaussian(1.0).unwrap());
        let mut m = RecomputeMechanism::new(10, 2, 9, Target::MaxSum, noise, 3).unwrap();
        m.step(&Record::ones(2)).unwrap();
        assert_eq!(m.recomputations(), 1);
        assert_eq!(recompute_stage(1, 9, 1), Some(1));
    }

    #[test]
    fn exponential_select_examples() {
        let mut rng = SeedKey::new(1).rng();
        let single = ColumnSums::from_counts(vec![3], 5).unwrap();
        for _ in 0..100 {
            assert_eq!(exponential_select(&single, 0.1, &mut rng).unwrap(), 1);
        }
        assert!(exponential_select(&single, 0.0, &mut rng).is_err());

        let tied = ColumnSums::from_counts(vec![5, 5], 5).unwrap();
        let exact = StageNoise::Additive(NoiseKind::None);
        assert_eq!(
            evaluate_stage(&Target::Select, &exact, &tied, 0, 1).unwrap(),
            Answer::Index(1)
        );
    }

    #[test]
    fn exponential_needs_selection_target() {
        let noise = StageNoise::Exponential { eps: 1.0 };
        assert!(RecomputeMechanism::new(10, 2, 3, Target::MaxSum, noise, 0).is_err());
    }

    #[test]
    fn period_choices() {
        let rho1 = PrivacyBudget::zcdp(1.0).unwrap();
        assert_eq!(
            optimal_period(4096, 1, rho1, &Target::MaxSum),
            Period::Stages { m: 111, r: 37 }
        );
        let tiny = PrivacyBudget::zcdp(12.0 / (4096.0 * 4096.0)).unwrap();
        assert_eq!(optimal_period(4096, 1, tiny, &Target::MaxSum), Period::Trivial);
        let pure = PrivacyBudget::pure_dp(1.0).unwrap();
        assert_eq!(
            optimal_period(1024, 1, pure, &Target::MaxSum),
            Period::Stages { m: 10, r: 103 }
        );
        // Selection: rho^(1/3) T^(2/3) / log2(dT)^(2/3) = 256 / 14^(2/3).
        assert_eq!(
            optimal_period(4096, 4, rho1, &Target::Select),
            Period::Stages { m: 44, r: 94 }
        );
    }

    #[test]
    fn custom_statistic_target() {
        let count: Statistic = Arc::new(|s: &ColumnSums| s.count() as f64);
        let exact = StageNoise::Additive(NoiseKind::None);
        let mut m = RecomputeMechanism::new(9, 2, 4, Target::Statistic(count), exact, 0).unwrap();
        let got = run_stream(&mut m, &vec![Record::zeros(2); 9]).unwrap();
        let want: Vec<_> = [1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0, 5.0]
            .into_iter()
            .map(Answer::Value)
            .collect();
        assert_eq!(got, want);
    }
}
