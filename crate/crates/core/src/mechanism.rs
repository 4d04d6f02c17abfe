//! The continual-release mechanism interface and a factory for building
//! fresh, seeded instances.

use std::fmt;

use crate::error::{Error, Result};
use crate::noise::NoiseKind;
use crate::recompute::{RecomputeMechanism, StageNoise, Target};
use crate::stream::{Answer, Record};
use crate::tree::TreeMechanism;

/// Which function of the prefix a mechanism releases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    /// Largest column sum, released as a real value.
    MaxSum,
    /// Index of the largest column sum.
    SumSelect,
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Query::MaxSum => "maxsum",
            Query::SumSelect => "select",
        })
    }
}

/// A mechanism in the continual release model: it consumes one record per
/// timestep and publishes one answer after each.
pub trait Mechanism {
    fn dim(&self) -> usize;

    /// Number of timesteps the mechanism will accept.
    fn horizon(&self) -> usize;

    /// Timesteps consumed so far.
    fn t(&self) -> usize;

    fn step(&mut self, x: &Record) -> Result<Answer>;
}

impl<M: Mechanism + ?Sized> Mechanism for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn t(&self) -> usize {
        (**self).t()
    }
    fn step(&mut self, x: &Record) -> Result<Answer> {
        (**self).step(x)
    }
}

/// Feeds a whole stream and collects the answers.
pub fn run_stream<M: Mechanism + ?Sized>(mech: &mut M, records: &[Record]) -> Result<Vec<Answer>> {
    records.iter().map(|x| mech.step(x)).collect()
}

pub(crate) fn check_step(t: usize, horizon: usize, d: usize, x: &Record) -> Result<()> {
    if t >= horizon {
        return Err(Error::HorizonExhausted { horizon });
    }
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.dim(),
        });
    }
    Ok(())
}

/// Ignores the data: always publishes `0` (MaxSum) or index `1` (SumSelect).
#[derive(Clone, Debug)]
pub struct TrivialMechanism {
    query: Query,
    horizon: usize,
    d: usize,
    t: usize,
}

impl TrivialMechanism {
    pub fn new(horizon: usize, d: usize, query: Query) -> Self {
        TrivialMechanism {
            query,
            horizon,
            d,
            t: 0,
        }
    }
}

impl Mechanism for TrivialMechanism {
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
        Ok(match self.query {
            Query::MaxSum => Answer::Value(0.0),
            Query::SumSelect => Answer::Index(1),
        })
    }
}

/// Fully resolved mechanism parameters; `build` yields a fresh instance.
#[derive(Clone, Debug)]
pub enum MechanismSpec {
    Tree {
        horizon: usize,
        d: usize,
        query: Query,
        noise: NoiseKind,
    },
    Recompute {
        horizon: usize,
        d: usize,
        period: usize,
        target: Target,
        noise: StageNoise,
    },
    Trivial {
        horizon: usize,
        d: usize,
        query: Query,
    },
}

impl MechanismSpec {
    pub fn horizon(&self) -> usize {
        match self {
            MechanismSpec::Tree { horizon, .. }
            | MechanismSpec::Recompute { horizon, .. }
            | MechanismSpec::Trivial { horizon, .. } => *horizon,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MechanismSpec::Tree { d, .. } | MechanismSpec::Recompute { d, .. } | MechanismSpec::Trivial { d, .. } => *d,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Mechanism>> {
        Ok(match self {
            MechanismSpec::Tree {
                horizon,
                d,
                query,
                noise,
            } => Box::new(TreeMechanism::new(*horizon, *d, *query, *noise, seed)?),
            MechanismSpec::Recompute {
                horizon,
                d,
                period,
                target,
                noise,
            } => Box::new(RecomputeMechanism::new(
                *horizon,
                *d,
                *period,
                target.clone(),
                *noise,
                seed,
            )?),
            MechanismSpec::Trivial { horizon, d, query } => Box::new(TrivialMechanism::new(*horizon, *d, *query)),
        })
    }
}
