mod common;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use bgtoric::harmonic::{
    axisym_laplacian, boundary_limit_residual, compare_profiles, eval_h, eval_partials, eval_u,
    gamma, GridSpec,
};
use bgtoric::BoundaryProfile;
use common::*;
use gauss_quad::GaussLegendre;
use proptest::prelude::*;
use rand::Rng;

const PREC: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

/// `U` from the textbook form `2 sum a_i (r_i - s_i log((r_i + s_i)/rho)) + (A + Bz) log rho^2`
/// in 192-bit arithmetic, where the cancellation in `r_i + s_i` is harmless.
fn u_high_precision(p: &BoundaryProfile, z: f64, rho: f64) -> f64 {
    let mut cc = Consts::new().unwrap();
    let f = |x: f64| BigFloat::from_f64(x, PREC);
    let (zb, rb) = (f(z), f(rho));
    let rho2 = rb.mul(&rb, PREC, RM);
    let mut total =
        f(p.a)
            .add(&f(p.b).mul(&zb, PREC, RM), PREC, RM)
            .mul(&rho2.ln(PREC, RM, &mut cc), PREC, RM);
    for k in &p.kinks {
        let s = zb.sub(&f(k.z), PREC, RM);
        let r = s.mul(&s, PREC, RM).add(&rho2, PREC, RM).sqrt(PREC, RM);
        let log = r.add(&s, PREC, RM).div(&rb, PREC, RM).ln(PREC, RM, &mut cc);
        let term = r.sub(&s.mul(&log, PREC, RM), PREC, RM);
        total = total.add(&f(2.0 * k.a).mul(&term, PREC, RM), PREC, RM);
    }
    total
        .format(Radix::Dec, RM, &mut cc)
        .unwrap()
        .parse()
        .unwrap()
}

fn generic() -> BoundaryProfile {
    profile(0.5, &[(-0.4, 0.7), (0.9, 1.1), (2.2, 0.35)])
}

#[test]
fn closed_form_matches_high_precision() {
    let p = generic();
    let exact = u_high_precision(&p, 1.3, 0.7);
    let u = eval_u(&p, 1.3, 0.7).unwrap();
    assert!((u - exact).abs() <= 1e-13 * exact.abs(), "{u} vs {exact}");
    // deep in the cancellation regime of the naive double-precision formula
    for &(z, rho) in &[(-40.0, 0.01), (-3.0, 1e-4), (25.0, 0.3), (0.9, 1e-6)] {
        let exact = u_high_precision(&p, z, rho);
        let u = eval_u(&p, z, rho).unwrap();
        assert!(
            (u - exact).abs() <= 1e-12 * exact.abs().max(1.0),
            "({z}, {rho}): {u} vs {exact}"
        );
    }
}

#[test]
fn trivial_values() {
    let flat = BoundaryProfile::from_kinks(1.0, 0.0, vec![]).unwrap();
    assert_eq!(eval_u(&flat, 0.0, 1.0).unwrap(), 0.0);
    let one =
        BoundaryProfile::from_kinks(0.0, 0.0, vec![bgtoric::Kink { z: 0.0, a: 1.0 }]).unwrap();
    for rho in [0.1, 1.0, 7.5] {
        assert!((eval_u(&one, 0.0, rho).unwrap() - 2.0 * rho).abs() < 1e-14 * rho);
    }
    assert!(eval_u(&one, 0.0, 0.0).is_err());
    assert!(eval_u(&one, 0.0, -1.0).is_err());
}

#[test]
fn partials_agree_with_finite_differences() {
    let mut r = rng(21);
    let h = 1e-5;
    for _ in 0..20 {
        let p = random_profile(&mut r, 4);
        for _ in 0..100 {
            let (z, rho) = (r.gen_range(-3.0..3.0), r.gen_range(0.1..3.0));
            let e = eval_partials(&p, z, rho).unwrap();
            let at = |z: f64, rho: f64| eval_partials(&p, z, rho).unwrap();
            let pairs = [
                (e.u_z, central(|t| eval_u(&p, t, rho).unwrap(), z, h)),
                (e.u_rho, central(|t| eval_u(&p, z, t).unwrap(), rho, h)),
                (e.u_zz, central(|t| at(t, rho).u_z, z, h)),
                (e.u_rhorho, central(|t| at(z, t).u_rho, rho, h)),
                (e.u_rhoz, central(|t| at(t, rho).u_rho, z, h)),
                (e.u_rhoz, central(|t| at(z, t).u_z, rho, h)),
            ];
            for (closed, fd) in pairs {
                assert!(rel(fd, closed) <= 1e-6, "({z}, {rho}): {closed} vs {fd}");
            }
        }
    }
}

#[test]
fn harmonic_on_grids() {
    let mut r = rng(5);
    let grid: GridSpec = "z=-5:5:101,rho=0.01:10:101".parse().unwrap();
    for _ in 0..20 {
        let p = random_profile(&mut r, 4);
        for (z, rho) in grid.points() {
            let e = eval_partials(&p, z, rho).unwrap();
            let terms = [e.u_rhorho, e.u_zz, e.u_rho / rho];
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            assert!(
                (terms[0] + terms[1] + terms[2]).abs() <= 1e-12 * scale,
                "({z}, {rho})"
            );
            // per-term identity
            let two_sum: f64 = p
                .kinks
                .iter()
                .map(|k| 2.0 * k.a / (z - k.z).hypot(rho))
                .sum();
            assert!((e.u_zz + two_sum).abs() <= 1e-12 * two_sum);
            assert!(e.u_zz < 0.0);
            assert!(rho * e.u_rho > 0.0);
        }
    }
}

/// Five-point central difference.
fn d5<F: Fn(f64) -> f64>(g: F, x: f64, h: f64) -> f64 {
    (-g(x + 2.0 * h) + 8.0 * g(x + h) - 8.0 * g(x - h) + g(x - 2.0 * h)) / (12.0 * h)
}

#[test]
fn conjugate_satisfies_cauchy_riemann() {
    let mut r = rng(8);
    let h = 1e-3;
    for _ in 0..20 {
        let p = random_profile(&mut r, 4);
        for _ in 0..50 {
            let (z, rho) = (r.gen_range(-3.0..3.0), r.gen_range(0.2..3.0));
            let e = eval_partials(&p, z, rho).unwrap();
            let h_z = d5(|t| eval_h(&p, t, rho).unwrap(), z, h);
            let h_rho = d5(|t| eval_h(&p, z, t).unwrap(), rho, h);
            assert!(rel(h_z, rho * e.u_rho) <= 1e-10, "H_z at ({z}, {rho})");
            assert!(rel(h_rho, -rho * e.u_z) <= 1e-10, "H_rho at ({z}, {rho})");
        }
    }
}

/// Line integral of `rho U_rho dz - rho U_z drho` along a polyline.
fn line_integral(p: &BoundaryProfile, path: &[(f64, f64)]) -> f64 {
    let gl = GaussLegendre::new(std::num::NonZeroUsize::new(40).unwrap());
    path.windows(2)
        .map(|w| {
            let ((z0, r0), (z1, r1)) = (w[0], w[1]);
            gl.integrate(0.0, 1.0, |t| {
                let (z, rho) = (z0 + t * (z1 - z0), r0 + t * (r1 - r0));
                let e = eval_partials(p, z, rho).unwrap();
                rho * e.u_rho * (z1 - z0) - rho * e.u_z * (r1 - r0)
            })
        })
        .sum()
}

#[test]
fn conjugate_is_path_independent() {
    let mut r = rng(13);
    for _ in 0..20 {
        let p = random_profile(&mut r, 3);
        let a = (r.gen_range(-2.0..2.0), r.gen_range(0.3..1.0));
        let b = (r.gen_range(-2.0..2.0), r.gen_range(1.5..3.0));
        let corner1 = [a, (b.0, a.1), b];
        let corner2 = [a, (a.0, b.1), b];
        // split every leg so no Gauss panel straddles a steep region
        let refine = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
            let mut out = vec![pts[0]];
            for w in pts.windows(2) {
                for k in 1..=16 {
                    let t = k as f64 / 16.0;
                    out.push((
                        w[0].0 + t * (w[1].0 - w[0].0),
                        w[0].1 + t * (w[1].1 - w[0].1),
                    ));
                }
            }
            out
        };
        let dh = eval_h(&p, b.0, b.1).unwrap() - eval_h(&p, a.0, a.1).unwrap();
        for path in [refine(&corner1), refine(&corner2), refine(&[a, b])] {
            let integral = line_integral(&p, &path);
            assert!(
                (integral - dh).abs() <= 1e-8 * dh.abs().max(1.0),
                "{integral} vs {dh}"
            );
        }
    }
}

#[test]
fn boundary_limit_trend() {
    let p = profile(0.5, &[(0.0, 0.5)]);
    let rhos: Vec<f64> = (2..=8).map(|k| 10f64.powi(-k)).collect();
    let res = boundary_limit_residual(&p, 1.0, &rhos);
    // direct evaluation oracle
    for (x, &rho) in res.iter().zip(&rhos) {
        let direct = (eval_u(&p, 1.0, rho).unwrap() / (rho * rho).ln() - p.eval(1.0)).abs();
        assert_eq!(*x, direct);
    }
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    let scaled: Vec<f64> = res
        .iter()
        .zip(&rhos)
        .map(|(x, r)| x * (r * r).ln().abs())
        .collect();
    let (s7, s8) = (scaled[5], scaled[6]);
    assert!((s7 - s8).abs() <= 0.05 * s8, "{s7} vs {s8}");
}

#[test]
fn symmetric_profile_gives_even_potential() {
    let p = profile(0.8, &[(-1.0, 0.6), (0.0, 0.3), (1.0, 0.6)]);
    let mut r = rng(2);
    for _ in 0..200 {
        let (z, rho) = (r.gen_range(0.0..5.0), r.gen_range(0.01..5.0));
        let (u1, u2) = (eval_u(&p, z, rho).unwrap(), eval_u(&p, -z, rho).unwrap());
        assert!(
            (u1 - u2).abs() <= 4.0 * f64::EPSILON * u1.abs().max(1.0),
            "{u1} vs {u2}"
        );
    }
}

#[test]
fn five_dimensional_laplacian() {
    for &(z, rho) in &[(0.3, 1.0), (-2.0, 0.5), (1.5, 3.0)] {
        let lz = axisym_laplacian(5, |z, _| z, z, rho, 1e-3).unwrap();
        let lq = axisym_laplacian(5, |z, rho| z * z - rho * rho / 4.0, z, rho, 1e-3).unwrap();
        assert!(lz.abs() <= 1e-8 && lq.abs() <= 1e-8, "{lz} {lq}");
        // the same function is not harmonic in 3D
        let l3 = axisym_laplacian(3, |z, rho| z * z - rho * rho / 4.0, z, rho, 1e-3).unwrap();
        assert!((l3 - 1.0).abs() < 1e-6);
    }
    assert!(axisym_laplacian(4, |z, _| z, 0.0, 1.0, 1e-3).is_err());
    assert!(axisym_laplacian(5, |z, _| z, 0.0, 1e-4, 1e-3).is_err());
}

#[test]
fn gamma_from_profiles() {
    let grid: GridSpec = "z=-3:3:31,rho=0.1:4:31".parse().unwrap();
    let p = generic();
    let same = compare_profiles(&p, &p.clone(), &grid).unwrap();
    assert_eq!(same.max_abs_gamma, 0.0);
    let delta = 0.25;
    let mut q = p.clone();
    q.a += delta;
    for (z, rho) in grid.points() {
        let g = gamma(&p, &q, z, rho);
        assert!((g + 2.0 * delta / (rho * rho)).abs() <= 1e-12 * g.abs());
    }
    // a genuinely different pair is still 5D-harmonic up to O(step^2)
    let other = profile(0.7, &[(-1.0, 0.4), (0.5, 1.0)]);
    for (z, rho) in [(0.2, 1.0), (1.7, 0.8), (-2.0, 2.5)] {
        let g = |z: f64, rho: f64| gamma(&p, &other, z, rho);
        let lap = axisym_laplacian(5, g, z, rho, 1e-3).unwrap();
        let scale = g(z, rho).abs() / (rho * rho);
        assert!(lap.abs() <= 1e-5 * scale.max(1.0), "{lap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn u_zz_negative_and_rho_u_rho_positive(seed in any::<u64>(), z in -50.0f64..50.0, rho in 1e-6f64..50.0) {
        let p = random_profile(&mut rng(seed), 5);
        let e = eval_partials(&p, z, rho).unwrap();
        prop_assert!(e.u_zz < 0.0);
        prop_assert!(rho * e.u_rho > 0.0);
        prop_assert!(e.harmonic_residual(rho) <= 1e-12);
    }
}
