//! Stream records, exact (non-private) MaxSum / SumSelect, and the error
//! metrics used to score continual releases.
//!
//! Attribute indices are 1-based everywhere they cross the public API.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// One stream element: `d` binary attributes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Record {
    bits: Vec<bool>,
}

impl Record {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("a record needs at least one attribute"));
        }
        Ok(Record { bits })
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "record dimension must be positive");
        Record { bits: vec![false; d] }
    }

    pub fn ones(d: usize) -> Self {
        assert!(d >= 1, "record dimension must be positive");
        Record { bits: vec![true; d] }
    }

    /// The standard basis record with a single 1 at (1-based) `index`.
    pub fn unit(d: usize, index: usize) -> Self {
        assert!((1..=d).contains(&index), "unit index {index} outside [1, {d}]");
        let mut r = Record::zeros(d);
        r.bits[index - 1] = true;
        r
    }

    /// Builds a record from the low `d` bits of `word`, attribute 1 first.
    pub fn from_word(word: u64, d: usize) -> Self {
        assert!((1..=64).contains(&d));
        Record {
            bits: (0..d).map(|j| (word >> j) & 1 == 1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Bitwise complement, `1^d - x`.
    pub fn complement(&self) -> Self {
        Record {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Record({self})")
    }
}

impl FromStr for Record {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Record::new(bits)
    }
}

/// A nonempty ordered prefix `x_1..x_t` of one stream; all records share `d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamPrefix {
    records: Vec<Record>,
}

impl StreamPrefix {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        check_uniform(&records)?;
        Ok(StreamPrefix { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records[0].dim()
    }

    pub fn column_sums(&self) -> ColumnSums {
        // Uniformity was checked at construction.
        column_sums(&self.records).expect("validated prefix")
    }
}

fn check_uniform(records: &[Record]) -> Result<usize> {
    let first = records
        .first()
        .ok_or_else(|| invalid("stream prefix must be nonempty"))?;
    let d = first.dim();
    for r in records {
        if r.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.dim(),
            });
        }
    }
    Ok(d)
}

/// Per-attribute counts over a prefix, plus the prefix length.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColumnSums {
    sums: Vec<u64>,
    count: u64,
}

impl ColumnSums {
    pub fn zeros(d: usize) -> Self {
        ColumnSums {
            sums: vec![0; d],
            count: 0,
        }
    }

    /// Column sums from explicit counts over `count` records.
    pub fn from_counts(sums: Vec<u64>, count: u64) -> Result<Self> {
        if sums.is_empty() {
            return Err(invalid("column sums need at least one attribute"));
        }
        if let Some(&bad) = sums.iter().find(|&&s| s > count) {
            return Err(invalid(format!("column sum {bad} exceeds prefix length {count}")));
        }
        Ok(ColumnSums { sums, count })
    }

    pub fn dim(&self) -> usize {
        self.sums.len()
    }

    /// Number of records summarized.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.sums
    }

    /// Sum of the (1-based) attribute `index`.
    pub fn get(&self, index: usize) -> Result<u64> {
        if !(1..=self.dim()).contains(&index) {
            return Err(invalid(format!("attribute index {index} outside [1, {}]", self.dim())));
        }
        Ok(self.sums[index - 1])
    }

    pub fn add(&mut self, x: &Record) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        for (s, &b) in self.sums.iter_mut().zip(x.bits()) {
            *s += u64::from(b);
        }
        self.count += 1;
        Ok(())
    }

    /// Removes a record previously added.
    pub fn remove(&mut self, x: &Record) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        if self.count == 0 || self.sums.iter().zip(x.bits()).any(|(&s, &b)| b && s == 0) {
            return Err(invalid("record was not part of these column sums"));
        }
        for (s, &b) in self.sums.iter_mut().zip(x.bits()) {
            *s -= u64::from(b);
        }
        self.count -= 1;
        Ok(())
    }

    /// Elementwise sum, the column sums of a concatenated stream.
    pub fn merge(&self, other: &ColumnSums) -> Result<ColumnSums> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(ColumnSums {
            sums: self.sums.iter().zip(&other.sums).map(|(a, b)| a + b).collect(),
            count: self.count + other.count,
        })
    }

    pub fn max(&self) -> u64 {
        self.sums.iter().copied().max().unwrap_or(0)
    }

    /// Smallest 1-based index attaining the maximum.
    pub fn argmax(&self) -> usize {
        argmax_first(self.sums.iter().copied())
    }
}

/// 1-based position of the first maximum of a nonempty sequence.
pub(crate) fn argmax_first<T: PartialOrd>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match &best {
            Some((_, b)) if v.partial_cmp(b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i + 1).expect("argmax of an empty sequence")
}

/// One published answer: an attribute index (selection) or a real value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Answer {
    Index(usize),
    Value(f64),
}

impl Answer {
    pub fn as_value(self) -> Option<f64> {
        match self {
            Answer::Value(v) => Some(v),
            Answer::Index(_) => None,
        }
    }

    pub fn as_index(self) -> Option<usize> {
        match self {
            Answer::Index(i) => Some(i),
            Answer::Value(_) => None,
        }
    }

    /// Bitwise identity; distinguishes `0.0` from `-0.0` and compares NaN payloads.
    pub fn bit_eq(&self, other: &Answer) -> bool {
        match (self, other) {
            (Answer::Index(a), Answer::Index(b)) => a == b,
            (Answer::Value(a), Answer::Value(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

pub fn column_sums(records: &[Record]) -> Result<ColumnSums> {
    let d = check_uniform(records)?;
    let mut sums = ColumnSums::zeros(d);
    for r in records {
        sums.add(r)?;
    }
    Ok(sums)
}

pub fn max_sum_exact(prefix: &StreamPrefix) -> u64 {
    prefix.column_sums().max()
}

pub fn sum_select_exact(prefix: &StreamPrefix) -> usize {
    prefix.column_sums().argmax()
}

/// `|MaxSum(prefix) - answer|`.
pub fn err_maxsum(sums: &ColumnSums, answer: f64) -> f64 {
    (sums.max() as f64 - answer).abs()
}

/// Deficit of the chosen attribute against the best one.
pub fn err_sumselect(sums: &ColumnSums, index: usize) -> Result<u64> {
    Ok(sums.max() - sums.get(index)?)
}

/// Error of one answer; the answer kind selects the metric.
pub fn answer_error(sums: &ColumnSums, answer: Answer) -> Result<f64> {
    match answer {
        Answer::Value(v) => Ok(err_maxsum(sums, v)),
        Answer::Index(i) => err_sumselect(sums, i).map(|e| e as f64),
    }
}

/// `max_t err(x_[t], a_t)` over a run given per-timestep column-sum snapshots.
pub fn max_error_over_run<'a, I>(run: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a ColumnSums, Answer)>,
{
    let mut worst: Option<f64> = None;
    for (sums, answer) in run {
        let e = answer_error(sums, answer)?;
        worst = Some(worst.map_or(e, |w: f64| w.max(e)));
    }
    worst.ok_or_else(|| invalid("cannot score an empty run"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefix(rows: &[&str]) -> StreamPrefix {
        StreamPrefix::new(rows.iter().map(|r| r.parse().unwrap()).collect()).unwrap()
    }

    #[test]
    fn column_sums_examples() {
        assert_eq!(prefix(&["10", "11"]).column_sums().as_slice(), &[2, 1]);
        assert_eq!(prefix(&["00"]).column_sums().as_slice(), &[0, 0]);
        let p = prefix(&["111"; 5]);
        assert_eq!(p.column_sums().as_slice(), &[5, 5, 5]);
        assert_eq!(p.column_sums().count(), 5);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let recs = vec!["10".parse().unwrap(), "101".parse().unwrap()];
        assert!(matches!(
            column_sums(&recs),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(StreamPrefix::new(recs).is_err());
        assert!(column_sums(&[]).is_err());
    }

    #[test]
    fn max_sum_and_select_examples() {
        assert_eq!(max_sum_exact(&prefix(&["10", "11"])), 2);
        assert_eq!(max_sum_exact(&prefix(&["00", "00"])), 0);
        assert_eq!(max_sum_exact(&prefix(&["10", "01", "01"])), 2);

        assert_eq!(sum_select_exact(&prefix(&["10", "11"])), 1);
        assert_eq!(sum_select_exact(&prefix(&["00"])), 1);
        assert_eq!(sum_select_exact(&prefix(&["01", "01"])), 2);
    }

    #[test]
    fn error_metric_examples() {
        let five = ColumnSums::from_counts(vec![5, 2], 7).unwrap();
        assert_eq!(err_maxsum(&five, 5.0), 0.0);
        assert_eq!(err_maxsum(&five, 3.5), 1.5);
        assert_eq!(err_maxsum(&ColumnSums::zeros(3), -2.0), 2.0);

        let s = prefix(&["10", "10", "01"]).column_sums();
        assert_eq!(err_sumselect(&s, 1).unwrap(), 0);
        assert_eq!(err_sumselect(&s, 2).unwrap(), 1);
        assert!(err_sumselect(&s, 0).is_err());
        assert!(err_sumselect(&s, 3).is_err());
        let zero = prefix(&["000"; 4]).column_sums();
        assert!((1..=3).all(|j| err_sumselect(&zero, j).unwrap() == 0));
    }

    #[test]
    fn max_error_over_run_examples() {
        let s = ColumnSums::from_counts(vec![4], 4).unwrap();
        let run = |errs: &[f64]| {
            let answers: Vec<_> = errs.iter().map(|e| Answer::Value(4.0 - e)).collect();
            max_error_over_run(answers.iter().map(|&a| (&s, a))).unwrap()
        };
        assert_eq!(run(&[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(run(&[0.0, 0.0]), 0.0);
        assert_eq!(run(&[3.0, 2.0, 7.0, 1.0]), 7.0);
        assert!(max_error_over_run(std::iter::empty()).is_err());
    }

    #[test]
    fn remove_undoes_add() {
        let mut s = ColumnSums::zeros(3);
        let x: Record = "101".parse().unwrap();
        s.add(&x).unwrap();
        s.remove(&x).unwrap();
        assert_eq!(s, ColumnSums::zeros(3));
        assert!(s.remove(&x).is_err());
    }

    #[test]
    fn record_parsing() {
        assert!("".parse::<Record>().is_err());
        assert!("012".parse::<Record>().is_err());
        assert_eq!("0110".parse::<Record>().unwrap().to_string(), "0110");
        assert_eq!(Record::unit(3, 2).to_string(), "010");
        assert_eq!(Record::unit(3, 2).complement().to_string(), "101");
        assert_eq!(Record::from_word(0b110, 3).to_string(), "011");
    }
}
