use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::calculus::p_energy;
use crate::generators::{coordinate, generate, random_pl, vertex_near, Generated, GeneratorSpec};
use crate::measure::ball_mass;

fn interval() -> Generated {
    generate(&GeneratorSpec::Interval { length: 1.0 }).unwrap()
}

fn vicsek(level: u32) -> Generated {
    generate(&GeneratorSpec::Vicsek { level }).unwrap()
}

/// Neumann heat kernel of `[0, 1]` by its cosine series.
fn theta(t: f64, x: f64, y: f64) -> f64 {
    1.0 + 2.0 * (1..200).map(|k| {
        let k = k as f64;
        (-k * k * PI * PI * t).exp() * (k * PI * x).cos() * (k * PI * y).cos()
    }).sum::<f64>()
}

fn vertex_at(op: &HeatOperator, g: &Generated, x: f64) -> VertexId {
    let p = g.space.point(0, x).unwrap();
    op.locate(&g.space, &p).unwrap()
}

#[test]
fn single_edge_ground_state_is_constant() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting).unwrap();
    assert_eq!(op.eigenvalues()[0], 0.0);
    let phi = op.mode_values(0);
    assert!((phi[0] - phi[1]).abs() < 1e-15 && (phi[0] - 1.0).abs() < 1e-14);
    // two lumped half masses joined by a unit conductance
    assert!((op.eigenvalues()[1] - 4.0).abs() < 1e-12);
}

#[test]
fn interval_spectrum_and_theta_series() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    assert_eq!(op.dof_count(), 1001);
    for k in 1..=10 {
        let exact = (k as f64 * PI).powi(2);
        assert!((op.eigenvalues()[k] / exact - 1.0).abs() < 0.01, "{k}");
    }
    let mid = vertex_at(&op, &g, 0.5);
    let p = op.kernel(0.1, mid, mid).unwrap();
    assert!((p - theta(0.1, 0.5, 0.5)).abs() < 1e-3, "{p}");
    assert!((theta(0.1, 0.5, 0.5) - 1.0386).abs() < 5e-5);
    let (x, y) = (vertex_at(&op, &g, 0.3), vertex_at(&op, &g, 0.45));
    assert!((op.kernel(0.01, x, y).unwrap() / theta(0.01, 0.3, 0.45) - 1.0).abs() < 1e-3);
    assert!((op.kernel(50.0, x, y).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn modes_are_mass_orthonormal_and_carry_their_energy() {
    let g = vicsek(2);
    let op = assemble(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting).unwrap();
    assert_eq!(op.dof_count(), 25);
    for a in 0..op.mode_count() {
        for b in 0..op.mode_count() {
            let dot: f64 = op.dof_vertices().iter().map(|&v| op.masses()[v] * op.mode_values(a)[v] * op.mode_values(b)[v]).sum();
            assert!((dot - f64::from(u8::from(a == b))).abs() < 1e-10);
        }
        let e = op.energy(&op.mode_values(a));
        assert!((e - op.eigenvalues()[a]).abs() <= 1e-9 * op.eigenvalues()[a].max(1.0));
    }
}

#[test]
fn stiffness_form_is_the_dirichlet_energy() {
    let g = generate(&GeneratorSpec::RandomTree { vertices: 30, seed: 4 }).unwrap();
    let op = assemble(&g.space, &g.measure, 0.3, Boundary::Reflecting).unwrap();
    let f = random_pl(&g.space, 9).unwrap().resample(op.space()).unwrap();
    let e = p_energy(&f, 2.0).unwrap().energy;
    assert!((op.energy(f.values()) - e).abs() <= 1e-12 * e);
    let clipped = f.map(|v| v.clamp(0.0, 1.0));
    assert!(op.energy(clipped.values()) <= op.energy(f.values()));
}

#[test]
fn kernel_invariants_on_vicsek() {
    let g = vicsek(3);
    let op = assemble(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = op.space().vertex_count();
    let pairs: Vec<(usize, usize)> = (0..40)
        .map(|_| {
            let dof = op.dof_vertices();
            (dof[rng.gen_range(0..dof.len())], rng.gen_range(0..n))
        })
        .collect();
    for t in [1e-4, 1e-3, 1e-2, 0.1] {
        let c = kernel_checks(&op, t, 0.5 * t, &pairs).unwrap();
        assert!(c.symmetry < 1e-10, "{c:?}");
        assert!(c.min_value > -1e-10, "{c:?}");
        assert!(c.conservation < 1e-8, "{c:?}");
        assert!(c.semigroup < 1e-8, "{c:?}");
    }
    let far = op.kernel(1e3, 0, n - 1).unwrap();
    assert!((far - 1.0 / op.total_mass()).abs() < 1e-12);
}

#[test]
fn holder_bound_on_random_triples() {
    for g in [interval(), vicsek(3)] {
        let op = assemble(&g.space, &g.measure, 0.01, Boundary::Reflecting).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = op.space().vertex_count();
        let triples: Vec<_> = (0..1000).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        for t in [1e-3, 1e-2] {
            let r = holder_check(&op, t, &triples).unwrap();
            assert!(r <= 1.0 + 1e-8, "{r}");
        }
    }
}

#[test]
fn condensation_is_the_limit_of_the_mass_floor() {
    let g = vicsek(2);
    let exact = assemble(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting).unwrap();
    let opts = HeatOptions { treatment: MassTreatment::Floor { relative: 1e-8 }, ..HeatOptions::default() };
    let floored = assemble_with(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting, &opts).unwrap();
    assert!(floored.mass_floor() > 0.0 && floored.dof_count() > exact.dof_count());
    for k in 1..10 {
        let (a, b) = (exact.eigenvalues()[k], floored.eigenvalues()[k]);
        assert!((a - b).abs() < 1e-5 * a, "{k}: {a} vs {b}");
    }
}

#[test]
fn partial_solve_reproduces_the_neumann_kernel() {
    let g = interval();
    let opts = HeatOptions { modes: Some(40), dense_limit: 1000, ..HeatOptions::default() };
    let op = assemble_with(&g.space, &g.measure, 5e-4, Boundary::Reflecting, &opts).unwrap();
    assert!(op.is_truncated() && op.mode_count() == 40);
    assert!(op.truncation_bound(0.05) < 1e-30);
    for k in 1..=10 {
        assert!((op.eigenvalues()[k] / (k as f64 * PI).powi(2) - 1.0).abs() < 0.01);
    }
    let mid = vertex_at(&op, &g, 0.5);
    assert!((op.kernel(0.1, mid, mid).unwrap() - theta(0.1, 0.5, 0.5)).abs() < 1e-3);
}

#[test]
fn refinement_changes_the_kernel_little() {
    let g = interval();
    let h = 0.01;
    let coarse = assemble(&g.space, &g.measure, h, Boundary::Reflecting).unwrap();
    let fine = assemble(&g.space, &g.measure, h / 2.0, Boundary::Reflecting).unwrap();
    for t in [100.0 * h * h, 0.05, 0.2] {
        for (x, y) in [(0.2, 0.2), (0.2, 0.35), (0.5, 0.9)] {
            let a = coarse.kernel(t, vertex_at(&coarse, &g, x), vertex_at(&coarse, &g, y)).unwrap();
            let b = fine.kernel(t, vertex_at(&fine, &g, x), vertex_at(&fine, &g, y)).unwrap();
            assert!((a / b - 1.0).abs() < 0.05, "t={t} ({x},{y}): {a} vs {b}");
        }
    }
}

#[test]
fn interval_on_diagonal_exponent_is_one_half() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let ts = crate::stats::log_grid(1e-4, 1e-3, 6);
    let fit = on_diagonal_profile(&op, &g.profile, vertex_at(&op, &g, 0.5), &ts).unwrap();
    assert!((fit.slope + 0.5).abs() < 0.05, "{fit:?}");
    assert!(on_diagonal_profile(&op, &g.profile, 0, &[1e-8, 1e-7]).is_err());
}

#[test]
fn interval_off_diagonal_is_gaussian() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let x = vertex_at(&op, &g, 0.5);
    let pairs: Vec<_> = [0.5, 0.52, 0.55, 0.6, 0.65, 0.7].iter().map(|&y| (x, vertex_at(&op, &g, y))).collect();
    let ts = crate::stats::log_grid(1e-3, 1e-2, 6);
    let rep = off_diagonal_check(&op, &g.profile, &pairs, &ts).unwrap();
    // p_t Φ(√t) = e^{-d²/4t} / √(4π) away from the ends
    assert!(rep.fit.r2 > 0.99, "{rep:?}");
    assert!((rep.fit.c2() - 0.25).abs() < 0.01, "{rep:?}");
    assert!((rep.fit.intercept.exp() * (4.0 * PI).sqrt() - 1.0).abs() < 0.02, "{rep:?}");
    assert!((rep.on_diagonal_exponent + 0.5).abs() < 0.01);
}

#[test]
fn interval_exit_time_is_half_r_squared() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let x = vertex_at(&op, &g, 0.5);
    for r in [0.05, 0.1, 0.2, 0.3] {
        let e = expected_exit_time(&op, x, r).unwrap();
        assert!((e / (0.5 * r * r) - 1.0).abs() < 0.05, "{r}: {e}");
    }
    assert!(expected_exit_time(&op, x, 1e-3).unwrap() < 1e-6);
    assert!(expected_exit_time(&op, x, 0.6).is_err());
}

#[test]
fn escape_limits_and_gaussian_tail() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let x = vertex_at(&op, &g, 0.5);
    assert!(escape_rate(&op, x, 0.2, 1e-5).unwrap() < 1e-12);
    let ball = ball_mass(op.space(), op.measure(), &TreePoint::Vertex(x), 0.2).unwrap();
    let eq = escape_rate(&op, x, 0.2, 100.0).unwrap();
    assert!((eq - (1.0 - ball)).abs() < 2e-3, "{eq} vs {}", 1.0 - ball);
    let rep = escape_fit(&op, &g.profile, x, &[0.05, 0.1, 0.15], &crate::stats::log_grid(1e-3, 1e-2, 6)).unwrap();
    assert!(rep.monotone);
    assert!(rep.fit.r2 >= 0.9 && rep.fit.slope < 0.0, "{:?}", rep.fit);
}

#[test]
fn interval_kernel_gradient_is_of_order_one_over_t() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let x = vertex_at(&op, &g, 0.5);
    let ratios: Vec<f64> = crate::stats::log_grid(1e-3, 1e-2, 5)
        .iter()
        .map(|&t| kernel_gradient_bound(&op, &g.profile, x, t, 0.125).unwrap().max_ratio)
        .collect();
    // Gaussian oracle: t |∂_y p_t| e^{d²/8t} = (d/2√t) e^{-d²/8t} / √(4π) <= 1 / (2√(πe))... bounded by 0.2
    assert!(crate::stats::max(&ratios) < 0.2 && crate::stats::spread(&ratios) < 1.5, "{ratios:?}");
    let late = op.kernel_row(10.0, x).unwrap();
    assert!(op.space().edges().iter().all(|e| (late[e.a] - late[e.b]).abs() / e.len < 1e-12));
}

#[test]
fn harmonic_functions_on_the_interval_are_affine() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let x = vertex_at(&op, &g, 0.5);
    let rep = harmonic_lipschitz_check(&op, x, 0.05, 3.0, 8, 1).unwrap();
    for (lip, avg) in rep.lipschitz.iter().zip(&rep.average) {
        // data g₁, g₂ at 0.5 ∓ 0.15: slope |g₂ - g₁| / 0.3 and mean (g₁ + g₂) / 2
        assert!(lip * 0.05 / avg <= 1.0 / 3.0 + 1e-9);
    }
    assert!(rep.constant > 0.0);
}

#[test]
fn semigroup_gradient_spectral_bound() {
    let g = interval();
    let op = assemble(&g.space, &g.measure, 1e-3, Boundary::Reflecting).unwrap();
    let f = coordinate(op.space(), 0).unwrap().map(|v| if v < 0.5 { 0.0 } else { 1.0 });
    let ts = crate::stats::log_grid(1e-3, 1e-2, 5);
    let tab = semigroup_gradient_bound(&op, &g.profile, &f, 2.0, &ts).unwrap();
    for row in &tab.rows {
        assert!(row.spectral_energy.unwrap() <= row.spectral_bound.unwrap());
        let e = row.grad_norm * row.grad_norm;
        assert!((e - row.spectral_energy.unwrap()).abs() < 1e-8 * e);
    }
    let sup = semigroup_gradient_bound(&op, &g.profile, &f, f64::INFINITY, &ts).unwrap();
    assert!(sup.rows.iter().all(|r| r.ratio <= 2.0), "{sup:?}");
    let late = op.semigroup(100.0, &f).unwrap();
    assert!(late.gradient_norm(2.0).unwrap() < 1e-12);
}

#[test]
fn vicsek_on_diagonal_exponent_at_level_four() {
    let g = vicsek(4);
    let op = assemble(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting).unwrap();
    let x = vertex_near(op.space(), [0.5, 0.5]).unwrap();
    assert!(op.is_dof(x));
    let (lo, hi) = time_range(&op, &g.profile);
    assert!(lo < hi);
    let _ = on_diagonal_profile(&op, &g.profile, x, &crate::stats::log_grid(hi / 100.0, hi / 10.0, 8)).unwrap();
}

#[test]
fn cache_round_trip() {
    let g = vicsek(2);
    let dir = std::env::temp_dir().join(format!("treecalc-cache-test-{}", std::process::id()));
    let opts = HeatOptions::default();
    let (a, hit_a) = assemble_cached(&dir, &g.space, &g.measure, f64::INFINITY, Boundary::Reflecting, &opts).unwrap();
    let (b, hit_b) = assemble_cached(&dir, &g.space, &g.measure, f64::INFINITY, Boundary::Reflecting, &opts).unwrap();
    assert!(!hit_a && hit_b);
    assert_eq!(a.eigenvalues(), b.eigenvalues());
    assert_eq!(a.kernel(0.01, 0, 3).unwrap(), b.kernel(0.01, 0, 3).unwrap());
    let other = cache_key(&g.space, &g.measure, 0.5, Boundary::Reflecting, &opts);
    assert_ne!(other, cache_key(&g.space, &g.measure, f64::INFINITY, Boundary::Reflecting, &opts));
    std::fs::remove_dir_all(&dir).unwrap();
}
