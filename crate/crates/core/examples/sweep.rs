//! Error scaling of recompute-at-intervals as the horizon grows.

use continual_dp::experiment::{series_slopes, sweep, sweep_points, Settings};

fn main() -> continual_dp::Result<()> {
    let mut s = Settings::new();
    for (k, v) in [
        ("mechanism", "recompute"),
        ("period", "auto"),
        ("rho", "1"),
        ("d", "4"),
        ("T", "2^8..2^13"),
        ("trials", "30"),
    ] {
        s.set(k, v)?;
    }
    let rows = sweep(&sweep_points(&s)?)?;
    println!("{:>6} {:>9} {:>9} {:>9}", "T", "q33", "median", "q67");
    for r in &rows {
        println!("{:>6} {:>9.2} {:>9.2} {:>9.2}", r.horizon, r.q33, r.median, r.q67);
    }
    for (_, _, slope) in series_slopes(&rows) {
        println!("log-log slope {slope:.3}");
    }
    Ok(())
}
