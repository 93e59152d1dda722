//! Analytic gradients of every architecture against central differences.
//!
//!     cargo run --release --example gradient_check -- [hidden] [obs_len] [seed]

use sfgru::gradcheck::{gradcheck, DEFAULT_STEP, TOLERANCE};
use sfgru::{ModelKind, ModelSpec};

fn main() -> sfgru::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().ok());
    let hidden = args.next().flatten().unwrap_or(4) as usize;
    let m = args.next().flatten().unwrap_or(3) as usize;
    let seed = args.next().flatten().unwrap_or(0);

    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, kind.default_features(), hidden, m)?;
        let r = gradcheck(&spec, seed, 2, DEFAULT_STEP)?;
        println!(
            "{:<7} {:>6} params  max rel err {:.2e} at {:<18} {:>4} refined  {}",
            kind.as_str(),
            r.n_params,
            r.max_rel_err,
            r.worst,
            r.refined,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    println!("tolerance {TOLERANCE:e}, step {DEFAULT_STEP:e}");
    Ok(())
}
