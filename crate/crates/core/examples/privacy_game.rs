//! Plays the adaptive privacy game, prints a transcript, and estimates the
//! advantage of a simple guess rule against the calibrated tree.

use continual_dp::game::advantage::dp_advantage_bound;
use continual_dp::game::transcript::write_view;
use continual_dp::game::{
    estimate_advantage, run_game, Adversary, ChallengeFirst, RandomAdaptive, Side, ThresholdGuess,
};
use continual_dp::noise::zcdp_to_dp;
use continual_dp::{Mechanism, PrivacyBudget, Query, Record, TreeMechanism};

fn main() -> continual_dp::Result<()> {
    let budget = PrivacyBudget::zcdp(0.5)?;
    let mut tree = TreeMechanism::from_budget(8, 3, Query::MaxSum, budget, None, 1)?;
    let view = run_game(&mut tree, &mut RandomAdaptive::new(3, 8), Side::R, 42)?;
    print!("{}", write_view(&view));

    let est = estimate_advantage(
        |seed| {
            Ok(Box::new(TreeMechanism::from_budget(16, 1, Query::MaxSum, budget, None, seed)?) as Box<dyn Mechanism>)
        },
        || Box::new(ChallengeFirst::new(Record::ones(1), Record::zeros(1), Record::zeros(1))) as Box<dyn Adversary>,
        &ThresholdGuess::last_answer(0.5, true),
        5000,
        9,
    )?;
    let delta = 1e-6;
    println!(
        "advantage {:.4} ± {:.4}; any guess is held to {:.4} at delta = {delta}",
        est.advantage,
        est.stderr,
        dp_advantage_bound(zcdp_to_dp(0.5, delta), delta)
    );
    Ok(())
}
