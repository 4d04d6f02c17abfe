//! Batch experiments behind the `continual-dp` binary: single runs, sweeps,
//! coupling checks and attacks, and the reductions on dataset files.
//!
//! Every trial draws its stream and its mechanism seed from
//! `(master seed, trial id)` alone, so outputs are byte-identical across
//! thread counts.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::advantage::{dp_advantage_bound, trial_seeds};
use crate::game::reductions::{
    block_argmaxes, build_kindsel_reduction_stream, build_maxsum_reduction_stream, exact_marginals,
    kindsel_from_answers, marginals_from_answers,
};
use crate::game::{
    estimate_advantage, run_binary_simulation, run_game, run_recompute_simulation, AdvantageEstimate, Adversary,
    ChallengeFirst, RandomAdaptive, RecomputeSimParams, Side, ThresholdGuess, TreeSimParams, View,
};
use crate::mechanism::{MechanismSpec, Query};
use crate::noise::{zcdp_to_dp, PrivacyBudget, SeedKey};
use crate::recompute::RecomputeMechanism;
use crate::stream::{answer_error, Answer, ColumnSums, Record};
use crate::tree::TreeMechanism;

pub use config::{MechanismKind, NoiseChoice, PeriodChoice, RunConfig, Settings, StreamSource};

const STREAM_KEY: u64 = 1;
const MECH_KEY: u64 = 2;

pub const RUN_HEADER: &str = "trial,t,truth,answer,err";
pub const SWEEP_HEADER: &str = "T,d,budget,trials,median,q33,q67";
pub const COUPLING_HEADER: &str = "trial,side,match,oracle_queries";
pub const ATTACK_HEADER: &str = "mechanism,trials,p_left_given_left,p_left_given_right,advantage,stderr,bound";
pub const REDUCE_HEADER: &str = "trial,coord,recovered,exact,deviation";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(io_err(p))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(sink))
}

fn write_header<W: Write>(w: &mut csv::Writer<W>, header: &str) -> Result<()> {
    w.write_record(header.split(','))?;
    Ok(())
}

/// One record per non-blank line, `0`/`1` characters, attribute 1 first.
pub fn parse_dataset(text: &str) -> Result<Vec<Record>> {
    let mut rows: Vec<Record> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let r: Record = line.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.dim() != r.dim() {
                return Err(parse_err(format!(
                    "record has {} bits, expected {}",
                    r.dim(),
                    first.dim()
                )));
            }
        }
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "dataset has no records".into(),
        });
    }
    Ok(rows)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Record>> {
    parse_dataset(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn uniform_stream<R: Rng + ?Sized>(len: usize, d: usize, p: f64, rng: &mut R) -> Vec<Record> {
    (0..len)
        .map(|_| Record::new((0..d).map(|_| rng.random_bool(p)).collect()).expect("d >= 1"))
        .collect()
}

/// The reduction stream for `variant` over a uniform batch, padded with zero
/// records to `horizon`.
pub fn reduction_stream<R: Rng + ?Sized>(
    horizon: usize,
    d: usize,
    k: usize,
    variant: Query,
    rng: &mut R,
) -> Result<Vec<Record>> {
    let mut x = match variant {
        Query::MaxSum => {
            let n = horizon / (2 * d);
            if n == 0 {
                return Err(Error::Config(format!("reduction stream needs T >= 2d = {}", 2 * d)));
            }
            build_maxsum_reduction_stream(&uniform_stream(n, d, 0.5, rng), n, d)?
        }
        Query::SumSelect => {
            if !d.is_multiple_of(k) {
                return Err(Error::Config(format!("d={d} does not split into k={k} blocks")));
            }
            let n = horizon / (4 * k);
            if n == 0 {
                return Err(Error::Config(format!("reduction stream needs T >= 4k = {}", 4 * k)));
            }
            build_kindsel_reduction_stream(&uniform_stream(n, d, 0.5, rng), n, d / k, k)?
        }
    };
    x.resize(horizon, Record::zeros(d));
    Ok(x)
}

/// Seeds of trial `trial`: (stream RNG key, mechanism seed).
pub fn trial_keys(master_seed: u64, trial: usize) -> (SeedKey, u64) {
    let root = SeedKey::new(master_seed);
    (
        root.path(&[STREAM_KEY, trial as u64]),
        root.path(&[MECH_KEY, trial as u64]).raw(),
    )
}

fn file_stream(c: &RunConfig) -> Result<Option<Vec<Record>>> {
    let StreamSource::File(path) = &c.stream else {
        return Ok(None);
    };
    let rows = read_dataset(path)?;
    if rows[0].dim() != c.d {
        return Err(Error::DimensionMismatch {
            expected: c.d,
            found: rows[0].dim(),
        });
    }
    if rows.len() < c.horizon {
        return Err(Error::Config(format!(
            "{} holds {} records, fewer than T={}",
            path.display(),
            rows.len(),
            c.horizon
        )));
    }
    Ok(Some(rows[..c.horizon].to_vec()))
}

pub fn trial_stream(c: &RunConfig, trial: usize, file: Option<&[Record]>) -> Result<Vec<Record>> {
    let mut rng = trial_keys(c.seed, trial).0.rng();
    match &c.stream {
        StreamSource::Uniform(p) => Ok(uniform_stream(c.horizon, c.d, *p, &mut rng)),
        StreamSource::Reduction => reduction_stream(c.horizon, c.d, c.k, c.variant, &mut rng),
        StreamSource::File(_) => Ok(file.expect("file stream loaded").to_vec()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub t: usize,
    pub truth: Answer,
    pub answer: Answer,
    pub err: f64,
}

/// Per-timestep rows (if kept) and the maximum error of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub rows: Vec<Row>,
    pub max_error: f64,
}

/// Runs one mechanism built from `spec` with `mech_seed` over `stream`.
pub fn run_trial(
    spec: &MechanismSpec,
    variant: Query,
    stream: &[Record],
    trial: usize,
    mech_seed: u64,
    keep_rows: bool,
) -> Result<TrialResult> {
    let mut mech = spec.build(mech_seed)?;
    let mut sums = ColumnSums::zeros(spec.dim());
    let mut rows = Vec::with_capacity(if keep_rows { stream.len() } else { 0 });
    let mut max_error = 0.0f64;
    for (i, x) in stream.iter().enumerate() {
        sums.add(x)?;
        let answer = mech.step(x)?;
        let err = answer_error(&sums, answer)?;
        max_error = max_error.max(err);
        if keep_rows {
            let truth = match variant {
                Query::MaxSum => Answer::Value(sums.max() as f64),
                Query::SumSelect => Answer::Index(sums.argmax()),
            };
            rows.push(Row {
                t: i + 1,
                truth,
                answer,
                err,
            });
        }
    }
    Ok(TrialResult { trial, rows, max_error })
}

/// All trials of `c`, in trial order.
pub fn run_trials(c: &RunConfig, keep_rows: bool) -> Result<Vec<TrialResult>> {
    let spec = c.mechanism_spec(c.horizon)?;
    let file = file_stream(c)?;
    (0..c.trials)
        .into_par_iter()
        .map(|trial| {
            let stream = trial_stream(c, trial, file.as_deref())?;
            run_trial(&spec, c.variant, &stream, trial, trial_keys(c.seed, trial).1, keep_rows)
        })
        .collect()
}

fn fmt_answer(a: Answer) -> String {
    match a {
        Answer::Index(i) => i.to_string(),
        Answer::Value(v) => v.to_string(),
    }
}

pub fn write_run_csv<W: Write>(results: &[TrialResult], w: &mut csv::Writer<W>) -> Result<()> {
    write_header(w, RUN_HEADER)?;
    for r in results {
        for row in &r.rows {
            w.write_record([
                r.trial.to_string(),
                row.t.to_string(),
                fmt_answer(row.truth),
                fmt_answer(row.answer),
                row.err.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// `run`: per-timestep CSV of every trial. Returns the per-trial max errors.
pub fn cmd_run(c: &RunConfig) -> Result<Vec<f64>> {
    let results = run_trials(c, true)?;
    write_run_csv(&results, &mut csv_writer(c.out.as_deref())?)?;
    Ok(results.iter().map(|r| r.max_error).collect())
}

/// Linear-interpolation quantile of `sorted` (ascending, nonempty).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Parses a grid axis: `a,b,c` or powers of two `2^lo..2^hi`.
pub fn parse_grid(v: &str) -> Result<Vec<String>> {
    let bad = || Error::Config(format!("bad grid '{v}'"));
    if let Some((lo, hi)) = v.split_once("..") {
        let exp = |s: &str| {
            s.trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse::<u32>().ok())
                .ok_or_else(bad)
        };
        let (lo, hi) = (exp(lo)?, exp(hi)?);
        if lo > hi || hi > 62 {
            return Err(bad());
        }
        return Ok((lo..=hi).map(|e| (1u64 << e).to_string()).collect());
    }
    let items: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
    if items.iter().any(String::is_empty) {
        return Err(bad());
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub horizon: usize,
    pub d: usize,
    pub budget: String,
    pub trials: usize,
    pub median: f64,
    pub q33: f64,
    pub q67: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Log-log slope of the median against `T` per `(d, budget)` series
    /// with at least two horizons.
    pub slopes: Vec<(usize, String, f64)>,
    pub plot_script: Option<PathBuf>,
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} grid points", self.rows.len())?;
        for (d, budget, slope) in &self.slopes {
            write!(
                f,
                "\nd={d} {budget}: log-log slope of median max error vs T = {slope:.3}"
            )?;
        }
        if let Some(p) = &self.plot_script {
            write!(f, "\nplot script: {}", p.display())?;
        }
        Ok(())
    }
}

/// Expands `T`, `d`, `rho` and `eps` in `base` as grid axes.
pub fn sweep_points(base: &Settings) -> Result<Vec<RunConfig>> {
    let axis = |key: &str| -> Result<Vec<Option<String>>> {
        match base.get(key) {
            Some(v) => Ok(parse_grid(v)?.into_iter().map(Some).collect()),
            None => Ok(vec![None]),
        }
    };
    let mut points = Vec::new();
    for t in axis("T")? {
        for d in axis("d")? {
            for rho in axis("rho")? {
                for eps in axis("eps")? {
                    let mut s = base.clone();
                    for (k, v) in [("T", &t), ("d", &d), ("rho", &rho), ("eps", &eps)] {
                        if let Some(v) = v {
                            s.set(k, v.clone())?;
                        }
                    }
                    points.push(RunConfig::from_settings(&s)?);
                }
            }
        }
    }
    Ok(points)
}

/// Per grid point: median and 1/3, 2/3 quantiles of the max error over trials.
pub fn sweep(points: &[RunConfig]) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|c| {
            let mut errs: Vec<f64> = run_trials(c, false)?.iter().map(|r| r.max_error).collect();
            errs.sort_by(f64::total_cmp);
            Ok(SweepRow {
                horizon: c.horizon,
                d: c.d,
                budget: c.budget_label(),
                trials: c.trials,
                median: quantile(&errs, 0.5),
                q33: quantile(&errs, 1.0 / 3.0),
                q67: quantile(&errs, 2.0 / 3.0),
            })
        })
        .collect()
}

pub fn series_slopes(rows: &[SweepRow]) -> Vec<(usize, String, f64)> {
    let mut series: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series
            .entry((r.d, r.budget.clone()))
            .or_default()
            .push((r.horizon as f64, r.median));
    }
    series
        .into_iter()
        .filter(|(_, pts)| pts.len() >= 2 && pts.iter().all(|&(_, y)| y > 0.0))
        .map(|((d, b), pts)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            (d, b, loglog_slope(&xs, &ys))
        })
        .collect()
}

pub fn plot_script(csv_path: &Path) -> String {
    format!(
        r#"import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open({path:?}) as f:
    for row in csv.DictReader(f):
        key = "d=" + row["d"] + " " + row["budget"]
        series[key].append((int(row["T"]), float(row["median"]), float(row["q33"]), float(row["q67"])))

for key, pts in sorted(series.items()):
    pts.sort()
    ts = [p[0] for p in pts]
    med = [p[1] for p in pts]
    lo = [p[1] - p[2] for p in pts]
    hi = [p[3] - p[1] for p in pts]
    plt.errorbar(ts, med, yerr=[lo, hi], marker="o", capsize=3, label=key)

plt.xscale("log")
plt.yscale("log")
plt.xlabel("T")
plt.ylabel("median max error")
plt.legend()
plt.savefig({png:?}, bbox_inches="tight")
"#,
        path = csv_path.display().to_string(),
        png = csv_path.with_extension("png").display().to_string(),
    )
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut csv::Writer<W>) -> Result<()> {
    write_header(w, SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.horizon.to_string(),
            r.d.to_string(),
            r.budget.clone(),
            r.trials.to_string(),
            r.median.to_string(),
            r.q33.to_string(),
            r.q67.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// `sweep`: grid CSV and, when writing to a file, a plot script beside it.
pub fn cmd_sweep(base: &Settings) -> Result<SweepReport> {
    let points = sweep_points(base)?;
    let rows = sweep(&points)?;
    let out = points[0].out.clone();
    write_sweep_csv(&rows, &mut csv_writer(out.as_deref())?)?;
    let plot = match &out {
        Some(p) => {
            let script = p.with_extension("plot.py");
            std::fs::write(&script, plot_script(p)).map_err(io_err(&script))?;
            Some(script)
        }
        None => None,
    };
    Ok(SweepReport {
        slopes: series_slopes(&rows),
        rows,
        plot_script: plot,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GameCommand {
    CoupleTree,
    CoupleRecompute,
    Attack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRow {
    pub trial: usize,
    pub side: Side,
    pub matched: bool,
    pub oracle_queries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GameReport {
    Coupling {
        rows: Vec<CouplingRow>,
        mismatches: usize,
    },
    Attack {
        estimate: AdvantageEstimate,
        bound: Option<f64>,
    },
}

impl GameReport {
    pub fn mismatches(&self) -> usize {
        match self {
            GameReport::Coupling { mismatches, .. } => *mismatches,
            GameReport::Attack { .. } => 0,
        }
    }
}

impl fmt::Display for GameReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameReport::Coupling { rows, mismatches } => {
                write!(f, "{} games, {mismatches} mismatches", rows.len())
            }
            GameReport::Attack { estimate, bound } => {
                write!(f, "advantage = {:.4} ± {:.4}", estimate.advantage, estimate.stderr)?;
                match bound {
                    Some(b) => write!(f, " (bound implied by the budget: {b:.4})"),
                    None => write!(f, " (no bound: noise overridden)"),
                }
            }
        }
    }
}

/// Coupling check for one game: real mechanism against its simulator.
fn couple_once(spec: &MechanismSpec, trial: usize, side: Side, master_seed: u64) -> Result<CouplingRow> {
    let (mech_seed, adv_seed) = trial_seeds(master_seed, side, trial);
    let (horizon, d) = (spec.horizon(), spec.dim());
    let adversary = || RandomAdaptive::new(d, horizon);
    let (game, sim) = match spec {
        MechanismSpec::Tree { query, noise, .. } => {
            let params = TreeSimParams {
                horizon,
                d,
                query: *query,
                noise: *noise,
                mech_seed,
            };
            let mut real = TreeMechanism::new(horizon, d, *query, *noise, mech_seed)?;
            let game = run_game(&mut real, &mut adversary(), side, adv_seed)?;
            (game, run_binary_simulation(&params, &mut adversary(), side, adv_seed)?)
        }
        MechanismSpec::Recompute {
            period, target, noise, ..
        } => {
            let params = RecomputeSimParams {
                horizon,
                d,
                period: *period,
                target: target.clone(),
                noise: *noise,
                mech_seed,
            };
            let mut real: RecomputeMechanism = params.build_mechanism()?;
            let game = run_game(&mut real, &mut adversary(), side, adv_seed)?;
            (
                game,
                run_recompute_simulation(&params, &mut adversary(), side, adv_seed)?,
            )
        }
        MechanismSpec::Trivial { .. } => {
            return Err(Error::Config("coupling needs the tree or a recompute schedule".into()))
        }
    };
    Ok(CouplingRow {
        trial,
        side,
        matched: game.bit_eq(&sim.view),
        oracle_queries: sim.oracle_queries,
    })
}

/// Runs `c.trials` coupling games per side.
pub fn coupling(c: &RunConfig, kind: MechanismKind) -> Result<GameReport> {
    let mut c = c.clone();
    c.mechanism = kind;
    let spec = c.mechanism_spec(c.horizon)?;
    let rows: Vec<CouplingRow> = (0..c.trials)
        .into_par_iter()
        .flat_map_iter(|i| [Side::L, Side::R].map(|s| (i, s)))
        .map(|(i, side)| couple_once(&spec, i, side, c.seed))
        .collect::<Result<_>>()?;
    let mismatches = rows.iter().filter(|r| !r.matched).count();
    Ok(GameReport::Coupling { rows, mismatches })
}

/// Advantage bound implied by the configured budget.
pub fn implied_bound(c: &RunConfig) -> Option<f64> {
    if c.mechanism == MechanismKind::Trivial {
        return Some(0.0);
    }
    if c.noise != NoiseChoice::Calibrated {
        return None;
    }
    Some(match c.budget? {
        PrivacyBudget::Zcdp { rho } => dp_advantage_bound(zcdp_to_dp(rho, c.report_delta), c.report_delta),
        PrivacyBudget::ApproxDp { eps, delta } => dp_advantage_bound(eps, delta),
        PrivacyBudget::PureDp { eps } => dp_advantage_bound(eps, 0.0),
    })
}

/// Challenge on round 1, then zero records; the guess reads the first answer.
pub fn attack(c: &RunConfig) -> Result<GameReport> {
    let spec = c.mechanism_spec(c.horizon)?;
    let d = c.d;
    let (left, right) = match c.variant {
        Query::MaxSum => (Record::ones(d), Record::zeros(d)),
        Query::SumSelect if d >= 2 => (Record::unit(d, 1), Record::unit(d, 2)),
        Query::SumSelect => return Err(Error::Config("the selection attack needs d >= 2".into())),
    };
    let adversary =
        || Box::new(ChallengeFirst::new(left.clone(), right.clone(), Record::zeros(d))) as Box<dyn Adversary>;
    let mech = |s: u64| spec.build(s);
    let estimate = match c.variant {
        Query::MaxSum => estimate_advantage(
            mech,
            adversary,
            &ThresholdGuess {
                at: Some(1),
                threshold: 0.5,
                left_if_above: true,
            },
            c.trials,
            c.seed,
        )?,
        Query::SumSelect => estimate_advantage(
            mech,
            adversary,
            &|v: &View| {
                if v.entries[0].answer == Answer::Index(1) {
                    Side::L
                } else {
                    Side::R
                }
            },
            c.trials,
            c.seed,
        )?,
    };
    Ok(GameReport::Attack {
        estimate,
        bound: implied_bound(c),
    })
}

pub fn write_game_csv<W: Write>(c: &RunConfig, report: &GameReport, w: &mut csv::Writer<W>) -> Result<()> {
    match report {
        GameReport::Coupling { rows, .. } => {
            write_header(w, COUPLING_HEADER)?;
            for r in rows {
                w.write_record([
                    r.trial.to_string(),
                    r.side.to_string(),
                    r.matched.to_string(),
                    r.oracle_queries.to_string(),
                ])?;
            }
        }
        GameReport::Attack { estimate, bound } => {
            write_header(w, ATTACK_HEADER)?;
            w.write_record([
                c.mechanism.to_string(),
                estimate.trials.to_string(),
                estimate.p_left_given_left.to_string(),
                estimate.p_left_given_right.to_string(),
                estimate.advantage.to_string(),
                estimate.stderr.to_string(),
                bound.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// `game`: the CSV goes to `c.out` only; the report is returned.
pub fn cmd_game(cmd: GameCommand, c: &RunConfig) -> Result<GameReport> {
    let report = match cmd {
        GameCommand::CoupleTree => coupling(c, MechanismKind::Tree)?,
        GameCommand::CoupleRecompute => coupling(c, MechanismKind::Recompute)?,
        GameCommand::Attack => attack(c)?,
    };
    if let Some(out) = &c.out {
        write_game_csv(c, &report, &mut csv_writer(Some(out))?)?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceCommand {
    Marginals,
    Kindsel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReduceRow {
    pub trial: usize,
    pub coord: usize,
    pub recovered: f64,
    pub exact: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReduceReport {
    pub rows: Vec<ReduceRow>,
    pub max_deviation: f64,
}

impl fmt::Display for ReduceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "max deviation {}", self.max_deviation)
    }
}

/// Runs the reduction on `y` through the mechanism `c` describes. The
/// horizon and variant follow from the reduction; `c.d` and `c.T` are ignored.
pub fn reduce(cmd: ReduceCommand, c: &RunConfig, y: &[Record]) -> Result<ReduceReport> {
    let n = y.len();
    let dim = y.first().map(Record::dim).unwrap_or(0);
    let mut c = c.clone();
    c.d = dim;
    let (stream, width) = match cmd {
        ReduceCommand::Marginals => {
            c.variant = Query::MaxSum;
            (build_maxsum_reduction_stream(y, n, dim)?, dim)
        }
        ReduceCommand::Kindsel => {
            c.variant = Query::SumSelect;
            if !dim.is_multiple_of(c.k) {
                return Err(Error::Config(format!(
                    "{dim} attributes do not split into k={} blocks",
                    c.k
                )));
            }
            let width = dim / c.k;
            (build_kindsel_reduction_stream(y, n, width, c.k)?, width)
        }
    };
    let spec = c.mechanism_spec(stream.len())?;
    let sums = crate::stream::column_sums(y)?;
    let exact_m = exact_marginals(y)?;
    let exact_b = match cmd {
        ReduceCommand::Kindsel => block_argmaxes(y, width, c.k)?,
        ReduceCommand::Marginals => Vec::new(),
    };
    let per_trial: Vec<Vec<ReduceRow>> = (0..c.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<ReduceRow>> {
            let mut mech = spec.build(trial_keys(c.seed, trial).1)?;
            let answers = crate::mechanism::run_stream(&mut mech, &stream)?;
            Ok(match cmd {
                ReduceCommand::Marginals => {
                    let a: Vec<f64> = answers.iter().map(|a| a.as_value().expect("MaxSum answer")).collect();
                    marginals_from_answers(&a, n, dim)?
                        .into_iter()
                        .zip(&exact_m)
                        .enumerate()
                        .map(|(j, (rec, &ex))| ReduceRow {
                            trial,
                            coord: j + 1,
                            recovered: rec,
                            exact: ex,
                            deviation: (rec - ex).abs(),
                        })
                        .collect()
                }
                ReduceCommand::Kindsel => {
                    let a: Vec<usize> = answers
                        .iter()
                        .map(|a| a.as_index().expect("selection answer"))
                        .collect();
                    kindsel_from_answers(&a, n, width, c.k)?
                        .into_iter()
                        .zip(&exact_b)
                        .enumerate()
                        .map(|(r, (rec, &ex))| {
                            let block = &sums.as_slice()[r * width..(r + 1) * width];
                            ReduceRow {
                                trial,
                                coord: r + 1,
                                recovered: rec as f64,
                                exact: ex as f64,
                                deviation: (block[ex - 1] - block[rec - 1]) as f64,
                            }
                        })
                        .collect()
                }
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ReduceRow> = per_trial.into_iter().flatten().collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(ReduceReport { rows, max_deviation })
}

pub fn write_reduce_csv<W: Write>(report: &ReduceReport, w: &mut csv::Writer<W>) -> Result<()> {
    write_header(w, REDUCE_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.trial.to_string(),
            r.coord.to_string(),
            r.recovered.to_string(),
            r.exact.to_string(),
            r.deviation.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// `reduce`: reads `c.data`, writes the CSV, returns the report.
pub fn cmd_reduce(cmd: ReduceCommand, c: &RunConfig) -> Result<ReduceReport> {
    let path = c
        .data
        .as_deref()
        .ok_or_else(|| Error::Config("reduce needs a dataset (--data)".into()))?;
    let y = read_dataset(path)?;
    let report = reduce(cmd, c, &y)?;
    write_reduce_csv(&report, &mut csv_writer(c.out.as_deref())?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(pairs: &[(&str, &str)]) -> RunConfig {
        let mut s = Settings::new();
        for (k, v) in pairs {
            s.set(k, *v).unwrap();
        }
        RunConfig::from_settings(&s).unwrap()
    }

    fn run_csv(c: &RunConfig) -> String {
        let results = run_trials(c, true).unwrap();
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        write_run_csv(&results, &mut w).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    #[test]
    fn trivial_run_errors_equal_truth() {
        let c = config(&[("mechanism", "trivial"), ("T", "16"), ("d", "3"), ("trials", "2")]);
        for r in run_trials(&c, true).unwrap() {
            for row in r.rows {
                assert_eq!(row.answer, Answer::Value(0.0));
                assert_eq!(row.err, row.truth.as_value().unwrap());
            }
        }
    }

    #[test]
    fn noiseless_tree_has_zero_error_and_row_count() {
        let c = config(&[
            ("noise", "none"),
            ("T", "4"),
            ("d", "2"),
            ("trials", "3"),
            ("variant", "select"),
        ]);
        let text = run_csv(&c);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RUN_HEADER);
        assert_eq!(lines.len(), 1 + 12);
        assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
    }

    #[test]
    fn run_is_deterministic_across_thread_counts() {
        let c = config(&[("rho", "1"), ("T", "40"), ("d", "3"), ("trials", "6"), ("seed", "5")]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        assert_eq!(one.install(|| run_csv(&c)), four.install(|| run_csv(&c)));
    }

    #[test]
    fn reduction_stream_source_pads_to_horizon() {
        let mut rng = SeedKey::new(3).rng();
        let x = reduction_stream(21, 2, 1, Query::MaxSum, &mut rng).unwrap();
        assert_eq!(x.len(), 21);
        assert!(x[20].count_ones() == 0);
        assert!(reduction_stream(3, 2, 1, Query::MaxSum, &mut rng).is_err());
        assert!(reduction_stream(32, 3, 2, Query::SumSelect, &mut rng).is_err());
    }

    #[test]
    fn dataset_parsing() {
        let y = parse_dataset("01\n\n11\n").unwrap();
        assert_eq!(y.len(), 2);
        assert!(matches!(parse_dataset("01\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("01\n2x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_dataset("\n").is_err());
    }

    #[test]
    fn quantiles_and_slope() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&[7.0], 0.33), 7.0);
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 0.5).abs() < 1e-12);
        assert_eq!(parse_grid("2^2..2^4").unwrap(), vec!["4", "8", "16"]);
        assert_eq!(parse_grid("1, 3").unwrap(), vec!["1", "3"]);
        assert!(parse_grid("2^4..2^2").is_err());
    }

    #[test]
    fn sweep_expands_grid() {
        let mut s = Settings::new();
        s.set("mechanism", "trivial").unwrap();
        s.set("T", "2^4..2^6").unwrap();
        s.set("d", "1,2").unwrap();
        let points = sweep_points(&s).unwrap();
        assert_eq!(points.len(), 6);
        let rows = sweep(&points).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.median > 0.0 && r.q33 <= r.median && r.median <= r.q67));
    }

    #[test]
    fn coupling_and_attack_reports() {
        let c = config(&[("T", "16"), ("d", "3"), ("rho", "1"), ("trials", "20"), ("seed", "4")]);
        assert_eq!(coupling(&c, MechanismKind::Tree).unwrap().mismatches(), 0);
        assert_eq!(coupling(&c, MechanismKind::Recompute).unwrap().mismatches(), 0);
        let c = config(&[
            ("T", "8"),
            ("d", "2"),
            ("noise", "none"),
            ("trials", "50"),
            ("variant", "select"),
        ]);
        let GameReport::Attack { estimate, bound } = attack(&c).unwrap() else {
            panic!("attack report expected")
        };
        assert_eq!(estimate.advantage, 1.0);
        assert_eq!(bound, None);
    }

    #[test]
    fn noiseless_reductions_are_exact() {
        let c = config(&[("noise", "none"), ("k", "2")]);
        let y = parse_dataset("0110\n1011\n0001\n").unwrap();
        let m = reduce(ReduceCommand::Marginals, &c, &y).unwrap();
        assert_eq!(m.max_deviation, 0.0);
        assert_eq!(m.rows.len(), 4);
        let k = reduce(ReduceCommand::Kindsel, &c, &y).unwrap();
        assert_eq!(k.max_deviation, 0.0);
        assert!(k.rows.iter().all(|r| r.recovered == r.exact));
    }

    #[test]
    fn noisy_marginals_within_tree_threshold() {
        let (n, d) = (64usize, 4usize);
        let c = config(&[("rho", "1"), ("trials", "100"), ("seed", "6")]);
        let mut rng = SeedKey::new(21).rng();
        let y = uniform_stream(n, d, 0.5, &mut rng);
        let report = reduce(ReduceCommand::Marginals, &c, &y).unwrap();
        let horizon = (2 * d * n) as f64;
        let levels = horizon.log2() + 1.0;
        let alpha = 20.0 * (d as f64 * levels * levels * (d as f64 * horizon).ln() / 2.0).sqrt();
        let within = (0..100)
            .filter(|&t| {
                report
                    .rows
                    .iter()
                    .filter(|r| r.trial == t)
                    .all(|r| r.deviation <= alpha / n as f64)
            })
            .count();
        assert!(within * 3 >= 200, "{within}/100");
    }
}
