//! Recovers one-way marginals and per-block argmaxes of a batch dataset by
//! feeding the reduction streams to continual mechanisms.

use continual_dp::game::reductions::{
    block_argmaxes, build_kindsel_reduction_stream, build_maxsum_reduction_stream, exact_marginals,
    kindsel_from_answers, marginals_from_answers,
};
use continual_dp::tree::tree_noise;
use continual_dp::{run_stream, NoiseKind, PrivacyBudget, Query, Record, TreeMechanism};

fn main() -> continual_dp::Result<()> {
    let y: Vec<Record> = ["0110", "1011", "0001", "1101"]
        .iter()
        .map(|s| s.parse())
        .collect::<continual_dp::Result<_>>()?;
    let (n, d) = (y.len(), 4);

    let x = build_maxsum_reduction_stream(&y, n, d)?;
    for (label, noise) in [
        ("noiseless", NoiseKind::None),
        ("rho = 1", tree_noise(d, x.len(), PrivacyBudget::zcdp(1.0)?)?),
    ] {
        let mut tree = TreeMechanism::new(x.len(), d, Query::MaxSum, noise, 5)?;
        let a: Vec<f64> = run_stream(&mut tree, &x)?.iter().filter_map(|a| a.as_value()).collect();
        println!("{label:>9}: marginals {:.3?}", marginals_from_answers(&a, n, d)?);
    }
    println!("    exact: marginals {:.3?}", exact_marginals(&y)?);

    let (width, k) = (2, 2);
    let x = build_kindsel_reduction_stream(&y, n, width, k)?;
    let mut tree = TreeMechanism::new(x.len(), width * k, Query::SumSelect, NoiseKind::None, 0)?;
    let a: Vec<usize> = run_stream(&mut tree, &x)?.iter().filter_map(|a| a.as_index()).collect();
    println!(
        "block argmaxes {:?} (exact {:?})",
        kindsel_from_answers(&a, n, width, k)?,
        block_argmaxes(&y, width, k)?
    );
    Ok(())
}
