//! Run configuration: `key = value` settings from a file and from flags,
//! resolved into a [`RunConfig`] and then into a [`MechanismSpec`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mechanism::{MechanismSpec, Query};
use crate::noise::{NoiseKind, PrivacyBudget};
use crate::recompute::{optimal_period, stage_count, stage_noise, Period, StageNoise, Target};
use crate::tree::tree_noise;

/// Keys accepted in config files and as flags.
pub const KEYS: &[&str] = &[
    "mechanism",
    "variant",
    "T",
    "d",
    "rho",
    "eps",
    "delta",
    "period",
    "noise",
    "trials",
    "seed",
    "stream",
    "out",
    "data",
    "k",
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Raw string settings. Later layers override earlier ones key by key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            s.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(config_err(format!("unknown key '{key}'")));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// `self` overridden by every key present in `over`.
    pub fn overlay(mut self, over: &Settings) -> Settings {
        for (k, v) in &over.0 {
            self.0.insert(k.clone(), v.clone());
        }
        self
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| config_err(format!("cannot parse {key} = '{v}'"))))
            .transpose()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MechanismKind {
    Tree,
    Recompute,
    Trivial,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Tree => "tree",
            MechanismKind::Recompute => "recompute",
            MechanismKind::Trivial => "trivial",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriodChoice {
    Auto,
    Fixed(usize),
}

/// `calibrated` scales noise from the budget; the others replace it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseChoice {
    Calibrated,
    None,
    Gaussian(f64),
    Laplace(f64),
}

impl NoiseChoice {
    fn kind(self) -> Result<Option<NoiseKind>> {
        Ok(match self {
            NoiseChoice::Calibrated => None,
            NoiseChoice::None => Some(NoiseKind::None),
            NoiseChoice::Gaussian(s) => Some(NoiseKind::gaussian(s)?),
            NoiseChoice::Laplace(s) => Some(NoiseKind::laplace(s)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamSource {
    /// Independent bits, each one with probability `p`.
    Uniform(f64),
    /// The marginals or block-selection reduction stream over a uniform batch.
    Reduction,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mechanism: MechanismKind,
    pub variant: Query,
    pub horizon: usize,
    pub d: usize,
    pub budget: Option<PrivacyBudget>,
    /// `delta` used to report an `(eps, delta)` guarantee for zCDP runs.
    pub report_delta: f64,
    pub period: Option<PeriodChoice>,
    pub noise: NoiseChoice,
    pub trials: usize,
    pub seed: u64,
    pub stream: StreamSource,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    /// Block count for the selection reduction.
    pub k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mechanism: MechanismKind::Tree,
            variant: Query::MaxSum,
            horizon: 1024,
            d: 1,
            budget: None,
            report_delta: 1e-6,
            period: None,
            noise: NoiseChoice::Calibrated,
            trials: 1,
            seed: 0,
            stream: StreamSource::Uniform(0.5),
            out: None,
            data: None,
            k: 1,
        }
    }
}

fn parse_noise(v: &str) -> Result<NoiseChoice> {
    let scale = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| config_err(format!("bad noise scale in '{v}'")))
    };
    Ok(match v.split_once(':') {
        None if v == "none" => NoiseChoice::None,
        None if v == "calibrated" || v == "default" => NoiseChoice::Calibrated,
        Some(("gaussian", s)) => NoiseChoice::Gaussian(scale(s)?),
        Some(("laplace", s)) => NoiseChoice::Laplace(scale(s)?),
        _ => {
            return Err(config_err(format!(
                "noise must be calibrated, none, gaussian:<sigma> or laplace:<scale>; got '{v}'"
            )))
        }
    })
}

fn parse_stream(v: &str) -> Result<StreamSource> {
    if v == "uniform" {
        return Ok(StreamSource::Uniform(0.5));
    }
    if v == "reduction" {
        return Ok(StreamSource::Reduction);
    }
    if let Some(p) = v.strip_prefix("uniform:") {
        let p: f64 = p.parse().map_err(|_| config_err(format!("bad probability in '{v}'")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(config_err(format!("uniform probability {p} outside [0, 1]")));
        }
        return Ok(StreamSource::Uniform(p));
    }
    if let Some(path) = v.strip_prefix("file:") {
        return Ok(StreamSource::File(PathBuf::from(path)));
    }
    Err(config_err(format!(
        "stream must be uniform[:p], reduction or file:<path>; got '{v}'"
    )))
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(m) = s.get("mechanism") {
            c.mechanism = match m {
                "tree" => MechanismKind::Tree,
                "recompute" => MechanismKind::Recompute,
                "trivial" => MechanismKind::Trivial,
                _ => return Err(config_err(format!("unknown mechanism '{m}'"))),
            };
        }
        if let Some(v) = s.get("variant") {
            c.variant = match v {
                "maxsum" => Query::MaxSum,
                "select" => Query::SumSelect,
                _ => return Err(config_err(format!("variant must be maxsum or select, got '{v}'"))),
            };
        }
        if let Some(t) = s.parsed("T")? {
            c.horizon = t;
        }
        if let Some(d) = s.parsed("d")? {
            c.d = d;
        }
        if c.horizon == 0 || c.d == 0 {
            return Err(config_err("T and d must be positive"));
        }
        let rho: Option<f64> = s.parsed("rho")?;
        let eps: Option<f64> = s.parsed("eps")?;
        let delta: Option<f64> = s.parsed("delta")?;
        c.budget = match (rho, eps, delta) {
            (Some(_), Some(_), _) => return Err(config_err("give either rho or eps, not both")),
            (Some(rho), None, _) => Some(PrivacyBudget::zcdp(rho)?),
            (None, Some(eps), Some(delta)) => Some(PrivacyBudget::approx_dp(eps, delta)?),
            (None, Some(eps), None) => Some(PrivacyBudget::pure_dp(eps)?),
            (None, None, _) => None,
        };
        if let Some(delta) = delta {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(config_err(format!("delta must lie in (0, 1), got {delta}")));
            }
            c.report_delta = delta;
        }
        c.period = match s.get("period") {
            None => None,
            Some("auto") => Some(PeriodChoice::Auto),
            Some(_) => Some(PeriodChoice::Fixed(s.parsed("period")?.expect("present"))),
        };
        if let Some(n) = s.get("noise") {
            c.noise = parse_noise(n)?;
        }
        if let Some(t) = s.parsed("trials")? {
            c.trials = t;
        }
        if c.trials == 0 {
            return Err(config_err("trials must be positive"));
        }
        if let Some(seed) = s.parsed("seed")? {
            c.seed = seed;
        }
        if let Some(v) = s.get("stream") {
            c.stream = parse_stream(v)?;
        }
        c.out = s.get("out").map(PathBuf::from);
        c.data = s.get("data").map(PathBuf::from);
        if let Some(k) = s.parsed("k")? {
            c.k = k;
        }
        if c.k == 0 {
            return Err(config_err("k must be positive"));
        }
        Ok(c)
    }

    /// The budget in the form the mechanisms take: `(eps, delta)` becomes
    /// zCDP with `rho = eps^2 / (16 ln(1/delta))`.
    pub fn resolved_budget(&self) -> Option<PrivacyBudget> {
        self.budget.map(PrivacyBudget::approx_to_zcdp)
    }

    pub fn budget_label(&self) -> String {
        match self.budget {
            None => "none".into(),
            Some(PrivacyBudget::Zcdp { rho }) => format!("rho={rho}"),
            Some(PrivacyBudget::PureDp { eps }) => format!("eps={eps}"),
            Some(PrivacyBudget::ApproxDp { eps, delta }) => format!("eps={eps};delta={delta}"),
        }
    }

    fn need_budget(&self) -> Result<PrivacyBudget> {
        self.resolved_budget().ok_or_else(|| {
            config_err(format!(
                "{} needs rho or eps unless noise is overridden",
                self.mechanism
            ))
        })
    }

    /// Resolves the mechanism for horizon `horizon` (normally `self.horizon`).
    pub fn mechanism_spec(&self, horizon: usize) -> Result<MechanismSpec> {
        let d = self.d;
        let query = self.variant;
        match self.mechanism {
            MechanismKind::Trivial => {
                if self.period.is_some() {
                    return Err(config_err("the trivial mechanism takes no period"));
                }
                if self.noise != NoiseChoice::Calibrated {
                    return Err(config_err("the trivial mechanism takes no noise override"));
                }
                Ok(MechanismSpec::Trivial { horizon, d, query })
            }
            MechanismKind::Tree => {
                if self.period.is_some() {
                    return Err(config_err("the tree mechanism takes no period"));
                }
                let noise = match self.noise.kind()? {
                    Some(k) => k,
                    None => tree_noise(d, horizon, self.need_budget()?)?,
                };
                Ok(MechanismSpec::Tree {
                    horizon,
                    d,
                    query,
                    noise,
                })
            }
            MechanismKind::Recompute => {
                let target = Target::from(query);
                let period = match self.period.unwrap_or(PeriodChoice::Auto) {
                    PeriodChoice::Fixed(r) => r,
                    PeriodChoice::Auto => match optimal_period(horizon, d, self.need_budget()?, &target) {
                        Period::Stages { r, .. } => r,
                        Period::Trivial => {
                            log::info!(
                                "budget too small for recomputation at T={horizon}; using the trivial mechanism"
                            );
                            return Ok(MechanismSpec::Trivial { horizon, d, query });
                        }
                    },
                };
                let stages = stage_count(horizon, period)?;
                let noise = match self.noise.kind()? {
                    Some(k) => StageNoise::Additive(k),
                    None => stage_noise(&target, stages, self.need_budget()?)?,
                };
                Ok(MechanismSpec::Recompute {
                    horizon,
                    d,
                    period,
                    target,
                    noise,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        let mut s = Settings::new();
        for (k, v) in pairs {
            s.set(k, *v).unwrap();
        }
        s
    }

    #[test]
    fn config_file_and_flag_precedence() {
        let file = Settings::parse("# experiment\nmechanism = recompute\nT = 64 # horizon\n\nrho=0.5\n").unwrap();
        let flags = settings(&[("T", "128")]);
        let c = RunConfig::from_settings(&file.overlay(&flags)).unwrap();
        assert_eq!(c.mechanism, MechanismKind::Recompute);
        assert_eq!(c.horizon, 128);
        assert_eq!(c.budget, Some(PrivacyBudget::Zcdp { rho: 0.5 }));
        assert!(matches!(Settings::parse("T 4"), Err(Error::Parse { line: 1, .. })));
        assert!(Settings::parse("colour = red").is_err());
    }

    #[test]
    fn budgets_resolve() {
        let c = RunConfig::from_settings(&settings(&[("eps", "1"), ("delta", "0.1")])).unwrap();
        let rho = 1.0 / (16.0 * 10f64.ln());
        assert_eq!(c.resolved_budget(), Some(PrivacyBudget::Zcdp { rho }));
        let c = RunConfig::from_settings(&settings(&[("eps", "2")])).unwrap();
        assert_eq!(c.resolved_budget(), Some(PrivacyBudget::PureDp { eps: 2.0 }));
        assert!(RunConfig::from_settings(&settings(&[("eps", "2"), ("rho", "1")])).is_err());
        assert!(RunConfig::from_settings(&settings(&[("rho", "-1")])).is_err());
    }

    #[test]
    fn invalid_combinations() {
        let c = RunConfig::from_settings(&settings(&[("mechanism", "trivial"), ("period", "4")])).unwrap();
        assert!(matches!(c.mechanism_spec(16), Err(Error::Config(_))));
        let c = RunConfig::from_settings(&settings(&[("mechanism", "tree")])).unwrap();
        assert!(c.mechanism_spec(16).is_err());
        let c = RunConfig::from_settings(&settings(&[("mechanism", "tree"), ("noise", "none")])).unwrap();
        assert!(c.mechanism_spec(16).is_ok());
        let c = RunConfig::from_settings(&settings(&[
            ("mechanism", "recompute"),
            ("period", "16"),
            ("noise", "none"),
        ]))
        .unwrap();
        assert!(c.mechanism_spec(16).is_err());
        assert!(RunConfig::from_settings(&settings(&[("noise", "gaussian")])).is_err());
        assert!(RunConfig::from_settings(&settings(&[("stream", "uniform:1.5")])).is_err());
    }

    #[test]
    fn auto_period_and_trivial_fallback() {
        let c = RunConfig::from_settings(&settings(&[("mechanism", "recompute"), ("rho", "1")])).unwrap();
        match c.mechanism_spec(4096).unwrap() {
            MechanismSpec::Recompute { period, .. } => assert_eq!(period, 37),
            other => panic!("{other:?}"),
        }
        let c = RunConfig::from_settings(&settings(&[("mechanism", "recompute"), ("rho", "1e-9")])).unwrap();
        assert!(matches!(c.mechanism_spec(64).unwrap(), MechanismSpec::Trivial { .. }));
    }
}
