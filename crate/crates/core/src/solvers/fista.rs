//! Accelerated proximal gradient with monotone restart.

use crate::gauges::Gauge;
use crate::linalg::{power_norm, Matrix, Vector};

pub(crate) struct LoopOutput {
    pub x: Vector,
    pub iterations: usize,
    pub converged: bool,
    /// Objective every 100 iterations.
    pub checkpoints: Vec<f64>,
}

pub(crate) fn objective(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge, x: &Vector) -> f64 {
    0.5 * (y - phi * x).norm_squared() + lambda * g.eval(x)
}

/// Runs until `check` accepts an iterate or `max_iter` is reached; `check`
/// returns the (possibly polished) accepted point.
pub(crate) fn fista(
    phi: &Matrix,
    y: &Vector,
    lambda: f64,
    g: &Gauge,
    x0: Vector,
    max_iter: usize,
    mut check: impl FnMut(&Vector) -> Option<Vector>,
) -> crate::Result<LoopOutput> {
    let l = power_norm(phi, 1e-10, 100_000).powi(2) * (1.0 + 1e-8);
    let step = if l > 0.0 { 1.0 / l } else { 1.0 };
    let mut x = x0;
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = objective(phi, y, lambda, g, &x);
    let mut plain = true;
    let mut checkpoints = vec![];
    for k in 1..=max_iter {
        let grad = phi.transpose() * (phi * &z - y);
        let x_new = g.prox(lambda * step, &(&z - grad * step))?;
        let f_new = objective(phi, y, lambda, g, &x_new);
        if f_new > fx && !plain {
            z = x.clone();
            t = 1.0;
            plain = true;
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            x = x_new;
            t = t_new;
            fx = f_new;
            plain = false;
        }
        if k % 100 == 0 {
            checkpoints.push(fx);
        }
        let every = if k <= 1_000 { 10 } else { 50 };
        if k % every == 0 {
            if let Some(xp) = check(&x) {
                return Ok(LoopOutput { x: xp, iterations: k, converged: true, checkpoints });
            }
        }
    }
    Ok(LoopOutput { x, iterations: max_iter, converged: false, checkpoints })
}
