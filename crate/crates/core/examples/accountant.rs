//! zCDP bookkeeping across several releases and conversion to (eps, delta).

use continual_dp::noise::{approx_dp_to_zcdp, zcdp_to_dp};
use continual_dp::ZcdpAccountant;

fn main() -> continual_dp::Result<()> {
    let mut acct = ZcdpAccountant::new();
    for rho in [0.1, 0.25, 0.05] {
        acct.charge(rho)?;
    }
    println!("{} releases, rho = {}", acct.releases(), acct.spent());
    for delta in [1e-5, 1e-9] {
        println!("  ({:.3}, {delta:e})-DP", acct.epsilon(delta));
    }
    let rho = approx_dp_to_zcdp(1.0, 1e-6);
    println!(
        "a tree run at (1, 1e-6)-DP uses rho = {rho:.5}; back to eps: {:.3}",
        zcdp_to_dp(rho, 1e-6)
    );
    Ok(())
}
