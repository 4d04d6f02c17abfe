//! Binary tree mechanism releasing SumSelect on a random stream.

use continual_dp::experiment::uniform_stream;
use continual_dp::stream::err_sumselect;
use continual_dp::{ColumnSums, Mechanism, PrivacyBudget, Query, SeedKey, TreeMechanism};

fn main() -> continual_dp::Result<()> {
    let (horizon, d) = (1024, 8);
    let budget = PrivacyBudget::zcdp(1.0)?;
    let mut tree = TreeMechanism::from_budget(horizon, d, Query::SumSelect, budget, None, 7)?;
    println!("noise per node: {:?}", tree.noise());

    let stream = uniform_stream(horizon, d, 0.5, &mut SeedKey::new(1).rng());
    let mut sums = ColumnSums::zeros(d);
    let mut worst = 0;
    for (i, x) in stream.iter().enumerate() {
        sums.add(x)?;
        let j = tree.step(x)?.as_index().expect("selection answer");
        worst = worst.max(err_sumselect(&sums, j)?);
        if (i + 1).is_power_of_two() {
            println!(
                "t={:>4}  selected {j}  exact {}  deficit {}",
                i + 1,
                sums.argmax(),
                err_sumselect(&sums, j)?
            );
        }
    }
    println!("max deficit over the run: {worst}");
    Ok(())
}
