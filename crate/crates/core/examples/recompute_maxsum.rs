//! Recompute-at-intervals MaxSum with the period chosen from the budget.

use continual_dp::experiment::uniform_stream;
use continual_dp::{optimal_period, ColumnSums, Mechanism, Period, PrivacyBudget, RecomputeMechanism, SeedKey, Target};

fn main() -> continual_dp::Result<()> {
    let (horizon, d) = (4096, 4);
    let budget = PrivacyBudget::zcdp(1.0)?;
    let Period::Stages { m, r } = optimal_period(horizon, d, budget, &Target::MaxSum) else {
        println!("budget too small; the trivial mechanism wins");
        return Ok(());
    };
    println!("m = {m} stages suggested, period r = {r}");

    let mut mech = RecomputeMechanism::from_budget(horizon, d, r, Target::MaxSum, budget, None, 3)?;
    let stream = uniform_stream(horizon, d, 0.5, &mut SeedKey::new(2).rng());
    let mut sums = ColumnSums::zeros(d);
    let mut worst = 0.0f64;
    for x in &stream {
        sums.add(x)?;
        let a = mech.step(x)?.as_value().expect("value answer");
        worst = worst.max((sums.max() as f64 - a).abs());
    }
    println!(
        "{} recomputations, stage noise {:?}, max error {worst:.2}",
        mech.recomputations(),
        mech.noise()
    );
    Ok(())
}
