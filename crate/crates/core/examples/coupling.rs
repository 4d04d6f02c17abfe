//! Runs the tree mechanism and its simulator side by side on the same
//! adaptive adversaries and checks the views agree bit for bit.

use continual_dp::game::advantage::trial_seeds;
use continual_dp::game::{run_binary_simulation, run_game, RandomAdaptive, Side, TreeSimParams};
use continual_dp::tree::tree_noise;
use continual_dp::{PrivacyBudget, Query, TreeMechanism};

fn main() -> continual_dp::Result<()> {
    let (horizon, d) = (32, 4);
    let noise = tree_noise(d, horizon, PrivacyBudget::zcdp(1.0)?)?;
    let mut mismatches = 0;
    for i in 0..500 {
        for side in [Side::L, Side::R] {
            let (mech_seed, adv_seed) = trial_seeds(0, side, i);
            let mut real = TreeMechanism::new(horizon, d, Query::SumSelect, noise, mech_seed)?;
            let game = run_game(&mut real, &mut RandomAdaptive::new(d, horizon), side, adv_seed)?;
            let params = TreeSimParams {
                horizon,
                d,
                query: Query::SumSelect,
                noise,
                mech_seed,
            };
            let sim = run_binary_simulation(&params, &mut RandomAdaptive::new(d, horizon), side, adv_seed)?;
            if !game.bit_eq(&sim.view) {
                mismatches += 1;
            }
        }
    }
    println!("1000 games, {mismatches} mismatches");
    Ok(())
}
