//! One GRU step by hand, then BPTT through a short sequence checked
//! against a central difference.
//!
//!     cargo run --example gru_cell

use sfgru::gru::{gru_sequence_forward, gru_step_backward, gru_step_forward, GruParams};
use sfgru::numerics::sigmoid;
use sfgru::Rng;

fn main() -> sfgru::Result<()> {
    // All weights 1, biases 0, x = 1, h_prev = 0: r = z = sigmoid(1) and
    // h = sigmoid(1) * tanh(1).
    let mut p = GruParams::zeros(1, 1, true);
    p.w_xr.set(0, 0, 1.0);
    p.w_xz.set(0, 0, 1.0);
    p.w_xh.set(0, 0, 1.0);
    let (h, cache) = gru_step_forward(&p, &[1.0], &[0.0])?;
    println!("scalar cell: h = {:.7} (sigmoid(1) * tanh(1) = {:.7})", h[0], sigmoid(1.0) * 1f64.tanh());
    println!("  r = {:.6}, z = {:.6}, h_tilde = {:.6}", cache.r[0], cache.z[0], cache.h_tilde[0]);

    let (dx, dh_prev, g) = gru_step_backward(&p, &cache, &[1.0])?;
    println!("  dh/dx = {:.6}, dh/dh_prev = {:.6}, dh/dw_xh = {:.6}", dx[0], dh_prev[0], g.w_xh.get(0, 0));

    // A 3-in, 4-hidden cell over 6 steps; loss is the sum of the last state.
    let mut rng = Rng::new(7);
    let p = GruParams::init(&mut rng, 3, 4, true)?;
    let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
    let loss = |p: &GruParams| -> f64 {
        let (hs, _) = gru_sequence_forward(p, &xs, &[0.0; 4]).unwrap();
        hs.last().unwrap().iter().sum()
    };

    let (_, caches) = gru_sequence_forward(&p, &xs, &[0.0; 4])?;
    let mut dh = vec![1.0; 4];
    let mut grad_w_hz = 0.0;
    for c in caches.iter().rev() {
        let (_, prev, g) = gru_step_backward(&p, c, &dh)?;
        grad_w_hz += g.w_hz.get(1, 2);
        dh = prev;
    }

    let h = 1e-5;
    let (mut plus, mut minus) = (p.clone(), p.clone());
    plus.w_hz.set(1, 2, p.w_hz.get(1, 2) + h);
    minus.w_hz.set(1, 2, p.w_hz.get(1, 2) - h);
    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
    println!("BPTT dL/dw_hz[1,2] = {grad_w_hz:.9}, central difference {numeric:.9}");
    Ok(())
}
