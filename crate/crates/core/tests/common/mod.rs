//! Oracles shared by the integration tests.
#![allow(dead_code)]

use ising_causal::model::log2cosh;
use ising_causal::parisi::ParisiMeasure;

/// Crank–Nicolson on `u = e^{mΦ}` (heat equation) per constant-μ gap, or
/// on `Φ` directly when `m = 0`; Dirichlet boundaries held at their values
/// from the start of each gap. Returns `Φ(0, 0)`.
pub fn crank_nicolson_phi0(mu: &ParisiMeasure, beta: f64) -> f64 {
    let (lo, hi, dx, dt) = (-30.0, 30.0, 0.01, 1e-3);
    let n = ((hi - lo) / dx) as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let mut phi: Vec<f64> = xs.iter().map(|&x| log2cosh(x)).collect();
    let mut breaks = vec![0.0];
    breaks.extend(mu.atoms().iter().copied().filter(|&q| q > 0.0 && q < 1.0));
    breaks.push(1.0);
    for w in breaks.windows(2).rev() {
        let m = mu.cdf(w[0]);
        let mut u: Vec<f64> = if m > 0.0 {
            phi.iter().map(|p| (m * p).exp()).collect()
        } else {
            phi.clone()
        };
        let steps = ((w[1] - w[0]) / dt).round().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        let r = 0.5 * beta * beta * h / (dx * dx);
        for _ in 0..steps {
            // (I − r/2 L) u' = (I + r/2 L) u, Thomas algorithm.
            let mut rhs = u.clone();
            for i in 1..n - 1 {
                rhs[i] = u[i] + 0.5 * r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
            }
            let (a, b) = (-0.5 * r, 1.0 + r);
            let mut cp = vec![0.0; n];
            let mut dp = vec![0.0; n];
            cp[0] = 0.0;
            dp[0] = rhs[0];
            for i in 1..n - 1 {
                let den = b - a * cp[i - 1];
                cp[i] = a / den;
                dp[i] = (rhs[i] - a * dp[i - 1]) / den;
            }
            let mut next = vec![0.0; n];
            next[n - 1] = rhs[n - 1];
            for i in (1..n - 1).rev() {
                next[i] = dp[i] - cp[i] * next[i + 1];
            }
            next[0] = rhs[0];
            u = next;
        }
        phi = if m > 0.0 {
            u.iter().map(|v| v.ln() / m).collect()
        } else {
            u
        };
    }
    phi[n / 2]
}

