//! Streams that turn a continual MaxSum or SumSelect mechanism into a batch
//! algorithm for one-way marginals or for per-block selection.
//!
//! Both builders append padding records to a batch dataset `y` so that, at
//! known timesteps, the query answer on the stream encodes one coordinate of
//! the batch answer. Every record of `y` appears exactly once.

use crate::error::{Error, Result};
use crate::stream::{argmax_first, column_sums, Record};

fn check_batch(y: &[Record], n: usize, dim: usize) -> Result<()> {
    if n == 0 {
        return Err(crate::error::invalid("batch dataset must be nonempty"));
    }
    if y.len() != n {
        return Err(crate::error::invalid(format!(
            "dataset has {} rows, expected n={n}",
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|x| x.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(())
}

/// `y ∘ e_1^n ∘ ē_1^n ∘ e_2^n ∘ … ∘ ē_{d-1}^n ∘ e_d^n`, of length `2dn`.
///
/// After `2jn` records column `j` holds `n·(q_j + j)` and every other column
/// at most that, so `MaxSum` there reveals the `j`-th marginal.
pub fn build_maxsum_reduction_stream(y: &[Record], n: usize, d: usize) -> Result<Vec<Record>> {
    check_batch(y, n, d)?;
    let mut out = Vec::with_capacity(2 * d * n);
    out.extend_from_slice(y);
    for j in 1..=d {
        let e = Record::unit(d, j);
        out.extend(std::iter::repeat_n(e.clone(), n));
        if j < d {
            out.extend(std::iter::repeat_n(e.complement(), n));
        }
    }
    debug_assert_eq!(out.len(), 2 * d * n);
    Ok(out)
}

/// `b_j = a_{2jn}/n − j` for `j = 1..d`.
pub fn marginals_from_answers(answers: &[f64], n: usize, d: usize) -> Result<Vec<f64>> {
    if answers.len() < 2 * d * n {
        return Err(crate::error::invalid(format!(
            "need {} answers, got {}",
            2 * d * n,
            answers.len()
        )));
    }
    let nf = n as f64;
    Ok((1..=d)
        .map(|j| (answers[2 * j * n - 1] - (j * n) as f64) / nf)
        .collect())
}

/// Record with ones exactly on block `j` (1-based) of `k` blocks of width `d`.
pub fn block_indicator(d: usize, k: usize, j: usize) -> Record {
    let bits = (0..d * k).map(|i| i / d + 1 == j).collect();
    Record::new(bits).expect("d*k >= 1")
}

/// `y ∘ (0^{dk})^n ∘ v_1^{2n} ∘ v̄_1^{2n} ∘ … ∘ v̄_{k-1}^{2n} ∘ v_k^{2n}`,
/// of length `4kn`.
pub fn build_kindsel_reduction_stream(y: &[Record], n: usize, d: usize, k: usize) -> Result<Vec<Record>> {
    if d == 0 || k == 0 {
        return Err(crate::error::invalid("d and k must be positive"));
    }
    check_batch(y, n, d * k)?;
    let mut out = Vec::with_capacity(4 * k * n);
    out.extend_from_slice(y);
    out.extend(std::iter::repeat_n(Record::zeros(d * k), n));
    for j in 1..=k {
        let v = block_indicator(d, k, j);
        out.extend(std::iter::repeat_n(v.clone(), 2 * n));
        if j < k {
            out.extend(std::iter::repeat_n(v.complement(), 2 * n));
        }
    }
    debug_assert_eq!(out.len(), 4 * k * n);
    Ok(out)
}

/// `b_r = a_{4rn} − d(r−1)`, replaced by 1 when it falls outside `[1, d]`.
pub fn kindsel_from_answers(answers: &[usize], n: usize, d: usize, k: usize) -> Result<Vec<usize>> {
    if answers.len() < 4 * k * n {
        return Err(crate::error::invalid(format!(
            "need {} answers, got {}",
            4 * k * n,
            answers.len()
        )));
    }
    Ok((1..=k)
        .map(|r| {
            let b = answers[4 * r * n - 1] as i64 - (d * (r - 1)) as i64;
            if (1..=d as i64).contains(&b) {
                b as usize
            } else {
                1
            }
        })
        .collect())
}

/// Column means of `y`.
pub fn exact_marginals(y: &[Record]) -> Result<Vec<f64>> {
    let sums = column_sums(y)?;
    let n = sums.count() as f64;
    Ok(sums.as_slice().iter().map(|&s| s as f64 / n).collect())
}

/// Per-block argmax of the column sums of `y` (smallest index on ties).
pub fn block_argmaxes(y: &[Record], d: usize, k: usize) -> Result<Vec<usize>> {
    let sums = column_sums(y)?;
    if sums.dim() != d * k {
        return Err(Error::DimensionMismatch {
            expected: d * k,
            found: sums.dim(),
        });
    }
    Ok(sums
        .as_slice()
        .chunks(d)
        .map(|block| argmax_first(block.iter().copied()))
        .collect())
}
