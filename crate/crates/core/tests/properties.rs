use proptest::prelude::*;
use regsel::gauges::{project_l1_ball, BlockPartition, Gauge};
use regsel::linalg::{gaussian_ensemble, Matrix, Subspace, Vector};
use regsel::model::{decompose, tv1d_gauge, DEFAULT_DELTA};
use regsel::solvers::lp::{lp_solve, LpProblem, Sense};
use regsel::solvers::{solve_penalized, SolveOptions};

fn vec_strategy(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(Vector::from_vec)
}

fn gauges(n: usize) -> Vec<Gauge> {
    vec![Gauge::L1(n), Gauge::Linf(n), Gauge::L2(n), Gauge::GroupL1L2(BlockPartition::uniform(n, 2).unwrap()), tv1d_gauge(n)]
}

fn prox_gauges(n: usize) -> Vec<Gauge> {
    vec![Gauge::L1(n), Gauge::Linf(n), Gauge::GroupL1L2(BlockPartition::uniform(n, 2).unwrap())]
}

/// Minimum of `cᵀx` over `{Ax ≤ b, 0 ≤ x ≤ 5}` in the plane, by checking every
/// intersection of two boundary lines.
fn brute_force_lp(c: [f64; 2], a: &[[f64; 2]], b: &[f64]) -> Option<f64> {
    let mut lines: Vec<([f64; 2], f64)> = a.iter().zip(b).map(|(r, &v)| (*r, v)).collect();
    lines.extend([([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0), ([1.0, 0.0], 5.0), ([0.0, 1.0], 5.0)]);
    let feasible = |x: [f64; 2]| {
        (0..2).all(|i| x[i] >= -1e-9 && x[i] <= 5.0 + 1e-9) && a.iter().zip(b).all(|(r, &v)| r[0] * x[0] + r[1] * x[1] <= v + 1e-9)
    };
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let ((p, u), (q, w)) = (lines[i], lines[j]);
            let det = p[0] * q[1] - p[1] * q[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(u * q[1] - p[1] * w) / det, (p[0] * w - u * q[0]) / det];
            if feasible(x) {
                let v = c[0] * x[0] + c[1] * x[1];
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holder_inequality(x in vec_strategy(6), u in vec_strategy(6)) {
        for g in gauges(6) {
            let polar = g.polar_eval(&u).unwrap();
            prop_assert!(x.dot(&u) <= g.eval(&x) * polar + 1e-9 * (1.0 + x.norm() * u.norm()), "{}", g.name());
        }
    }

    #[test]
    fn gauge_is_positively_homogeneous(x in vec_strategy(6), s in 0.0f64..10.0) {
        for g in gauges(6) {
            let lhs = g.eval(&(&x * s));
            prop_assert!((lhs - s * g.eval(&x)).abs() <= 1e-10 * (1.0 + lhs.abs()), "{}", g.name());
        }
    }

    #[test]
    fn prox_satisfies_its_optimality_condition(v in vec_strategy(6), lambda in 0.05f64..2.0) {
        for g in prox_gauges(6) {
            let p = g.prox(lambda, &v).unwrap();
            let r = &v - &p;
            prop_assert!(g.polar_eval(&r).unwrap() <= lambda * (1.0 + 1e-9) + 1e-12, "{}", g.name());
            prop_assert!((r.dot(&p) - lambda * g.eval(&p)).abs() <= 1e-9 * (1.0 + v.norm_squared()), "{}", g.name());
        }
    }

    #[test]
    fn l1_ball_projection_is_idempotent(v in vec_strategy(7), radius in 0.1f64..4.0) {
        let p = project_l1_ball(&v, radius);
        prop_assert!(p.lp_norm(1) <= radius * (1.0 + 1e-12));
        prop_assert!((project_l1_ball(&p, radius) - &p).amax() <= 1e-12);
        // Obtuse-angle characterization of the Euclidean projection.
        let w = project_l1_ball(&Vector::from_fn(7, |i, _| (i as f64 - 3.0) * 0.3), radius);
        prop_assert!((&v - &p).dot(&(&w - &p)) <= 1e-9);
    }

    #[test]
    fn subspace_projections_split_space(seed in 0u64..1000, k in 0usize..6, v in vec_strategy(6)) {
        let a = gaussian_ensemble(6, k, seed);
        let t = Subspace::span(&a);
        let s = t.complement();
        prop_assert!((t.project(&v) + s.project(&v) - &v).amax() <= 1e-12);
        prop_assert!((t.project(&t.project(&v)) - t.project(&v)).amax() <= 1e-12);
        prop_assert!(t.project(&v).dot(&s.project(&v)).abs() <= 1e-10);
    }

    #[test]
    fn decomposition_reproduces_gauge_value(x in vec_strategy(6)) {
        prop_assume!(x.amax() > 1e-3);
        for g in [Gauge::L1(6), Gauge::Linf(6), Gauge::GroupL1L2(BlockPartition::uniform(6, 2).unwrap()), tv1d_gauge(6)] {
            let (md, _) = decompose(&g, &x, DEFAULT_DELTA).unwrap();
            prop_assert!(md.t.distance(&x) <= 1e-9 * (1.0 + x.norm()), "{}", g.name());
            prop_assert!((md.e.dot(&x) - g.eval(&x)).abs() <= 1e-9 * (1.0 + g.eval(&x)), "{}", g.name());
            prop_assert!((md.t.project(&md.e) - &md.e).amax() <= 1e-9, "{}", g.name());
        }
    }

    #[test]
    fn lp_matches_vertex_enumeration(
        c in prop::array::uniform2(-2.0f64..2.0),
        rows in prop::collection::vec((prop::array::uniform2(-2.0f64..2.0), 0.1f64..4.0), 1..5),
    ) {
        let mut p = LpProblem::new(2);
        p.objective = c.to_vec();
        p.upper = vec![5.0, 5.0];
        for (r, b) in &rows {
            p.rows.push(r.to_vec());
            p.senses.push(Sense::Le);
            p.rhs.push(*b);
        }
        let a: Vec<[f64; 2]> = rows.iter().map(|r| r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let oracle = brute_force_lp(c, &a, &b).unwrap();
        let sol = lp_solve(&p).unwrap().optimal().unwrap();
        prop_assert!((sol.value - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn penalized_solution_beats_perturbations(seed in 0u64..10_000, frac in 0.05f64..0.8, dir in vec_strategy(8)) {
        let phi: Matrix = gaussian_ensemble(5, 8, seed);
        let y = Vector::from_fn(5, |i, _| ((seed + i as u64) % 7) as f64 - 3.0);
        prop_assume!(y.amax() > 0.0);
        for g in prox_gauges(8) {
            let lambda = frac * g.polar_eval(&(phi.transpose() * &y)).unwrap();
            let r = solve_penalized(&phi, &y, lambda, &g, &SolveOptions::default()).unwrap();
            prop_assert!(r.converged);
            let x = r.x();
            let obj = |z: &Vector| 0.5 * (&y - &phi * z).norm_squared() + lambda * g.eval(z);
            for s in [1e-3, 1e-1, 1.0] {
                prop_assert!(obj(&x) <= obj(&(&x + &dir * s)) + 1e-9, "{}", g.name());
            }
        }
    }

    #[test]
    fn solver_is_deterministic(seed in 0u64..10_000) {
        let phi = gaussian_ensemble(6, 10, seed);
        let y = Vector::from_fn(6, |i, _| (i as f64 - 2.5) * 0.7);
        let g = Gauge::Linf(10);
        let a = solve_penalized(&phi, &y, 0.2, &g, &SolveOptions::default()).unwrap();
        let b = solve_penalized(&phi, &y, 0.2, &g, &SolveOptions::default()).unwrap();
        prop_assert_eq!(a.x_hat, b.x_hat);
        prop_assert_eq!(a.iterations, b.iterations);
    }
}
