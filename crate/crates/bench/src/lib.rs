//! Seeded fixtures shared by the benchmarks.

use regsel::experiments::{linf_signal, sparse_signal, trial_rng};
use regsel::linalg::{gaussian_matrix, Matrix, Vector};
use regsel::polytope::{random_polytope, Polytope};

/// Gaussian `Φ` with a matching signal and its clean measurements.
pub struct Instance {
    pub phi: Matrix,
    pub x0: Vector,
    pub y: Vector,
}

/// ℓ∞ instance: `|I|` entries saturated at ±1, the rest in `(−½, ½)`.
pub fn linf_instance(n: usize, q: usize, i_size: usize, seed: u64) -> Instance {
    let mut rng = trial_rng(seed, 0);
    let x0 = linf_signal(n, i_size, &mut rng);
    let phi = gaussian_matrix(q, n, &mut rng);
    let y = &phi * &x0;
    Instance { phi, x0, y }
}

/// `s`-sparse instance with magnitudes in `[1, 2)`.
pub fn sparse_instance(n: usize, q: usize, s: usize, seed: u64) -> Instance {
    let mut rng = trial_rng(seed, 0);
    let x0 = sparse_signal(n, s, &mut rng);
    let phi = gaussian_matrix(q, n, &mut rng);
    let y = &phi * &x0;
    Instance { phi, x0, y }
}

/// Piecewise-constant signal with `pieces` equal-length plateaus.
pub fn tv_instance(n: usize, q: usize, pieces: usize, seed: u64) -> Instance {
    let mut rng = trial_rng(seed, 0);
    let phi = gaussian_matrix(q, n, &mut rng);
    let width = n.div_ceil(pieces.max(1));
    let x0 = Vector::from_fn(n, |i, _| ((i / width) % 3) as f64 - 1.0);
    let y = &phi * &x0;
    Instance { phi, x0, y }
}

pub fn polytope(dim: usize, seed: u64) -> Polytope {
    random_polytope(dim, 3 * dim + 2, &mut trial_rng(seed, 0)).expect("random polytope")
}
