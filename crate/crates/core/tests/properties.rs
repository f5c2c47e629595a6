use std::f64::consts::PI;

use nevlab::brownian::{simulate_exit, PathConfig};
use nevlab::exhaustion::{g_r_on_inner_sphere, level};
use nevlab::heat_green::*;
use nevlab::model_geometry::*;
use nevlab::nevanlinna::*;
use nevlab::quad::{self, Tolerance};
use num_complex::Complex64;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn profile() -> impl Strategy<Value = VolumeProfile> {
    prop_oneof![
        (2u32..5).prop_map(VolumeProfile::euclidean),
        (0.1f64..10.0, 2.1f64..8.0).prop_map(|(c, a)| VolumeProfile::power(c, a)),
        (0.1f64..10.0, 2.1f64..6.0, 0.0f64..3.0).prop_map(|(c, alpha, beta)| VolumeProfile::PowerLog {
            c,
            alpha,
            beta
        }),
        (-4.0f64..-0.1, 3u32..7).prop_map(|(k, n)| VolumeProfile::spaceform(k, n)),
    ]
}

fn sheet_point(theta: usize) -> impl Strategy<Value = SheetPoint> {
    (1..=theta, prop::collection::vec(-4.0f64..4.0, 4)).prop_filter_map("outside the seam ball", |(s, v)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1.0 + 1e-6 {
            Some(SheetPoint::new(s, v))
        } else {
            None
        }
    })
}

fn cpx() -> impl Strategy<Value = Complex64> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex64::new(a, b))
}

/// `[1 : a·z + c]` on `ℂ²` with a random base point.
fn line_map() -> impl Strategy<Value = TestMap> {
    (cpx(), cpx(), cpx(), cpx(), cpx()).prop_filter_map("non-constant", |(a1, a2, c, o1, o2)| {
        if a1.norm() + a2.norm() < 0.1 {
            return None;
        }
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        TestMap::affine(2, vec![(vec![zero, zero], one), (vec![a1, a2], c)], vec![o1, o2]).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn volume_is_increasing_and_continuous(p in profile(), r in 1e-3f64..50.0, dr in 1e-6f64..5.0) {
        let (v0, v1) = (volume(&p, r).unwrap(), volume(&p, r + dr).unwrap());
        prop_assert!(v1 > v0);
        let near = volume(&p, r * (1.0 + 1e-9)).unwrap();
        prop_assert!(rel(near, v0) < 1e-6);
        prop_assert_eq!(volume(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn distances_are_a_metric(x in sheet_point(2), y in sheet_point(2), z in sheet_point(2)) {
        let model = ConnectedSumModel::glued_euclidean(2, 2);
        let dxy = model.distances(&x, &y).unwrap();
        let dyx = model.distances(&y, &x).unwrap();
        prop_assert!((dxy.d - dyx.d).abs() < 1e-9 * (1.0 + dxy.d));
        prop_assert!((dxy.d_plus - dyx.d_plus).abs() < 1e-9 * (1.0 + dxy.d_plus));
        prop_assert!(dxy.d <= dxy.d_empty);
        let (ax, ay) = (model.abs(&x), model.abs(&y));
        prop_assert!(dxy.d_plus <= ax + ay + 1e-9);
        prop_assert!(dxy.d_plus >= ax + ay - 2.0 * model.diam_k() - 1e-9);
        let (ys, zs) = (SheetPoint { sheet: x.sheet, ..y.clone() }, SheetPoint { sheet: x.sheet, ..z.clone() });
        let d = |p: &SheetPoint, q: &SheetPoint| model.distances(p, q).unwrap().d;
        prop_assert!(d(&x, &zs) <= d(&x, &ys) + d(&ys, &zs) + 1e-9);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
    }

    #[test]
    fn h_is_monotone(r in 1.0f64..6.0, t in 0.01f64..200.0, dt in 0.0f64..100.0, c in 0.05f64..5.0, grow in 1.0f64..4.0) {
        let model = |c: f64| {
            ConnectedSumModel::new(2, vec![End::flat(VolumeProfile::power(c, 4.5))], 0.0, HeatBoundConstants::euclidean(2)).unwrap()
        };
        let x = SheetPoint::new(1, vec![r, 0.0, 0.0, 0.0]);
        let (small, big) = (model(c), model(c * grow));
        let h0 = h_function(&small, &x, t).unwrap();
        prop_assert!(h0 > 0.0 && h0 <= 1.0);
        prop_assert!(not_above(h0, h_function(&small, &x, t + dt).unwrap()));
        prop_assert!(not_above(h_function(&big, &x, t).unwrap(), h0));
    }

    #[test]
    fn euclidean_tail_closed_forms(r in 1e-2f64..1e3) {
        let flat = VolumeProfile::euclidean(2);
        prop_assert!(rel(tail_value(&flat, 4.0, TailPower::Zero, r).unwrap(), 8.0 / (PI * PI * r * r)) < 1e-8);
        prop_assert!(rel(tail_value(&flat, 4.0, TailPower::One, r).unwrap(), 32.0 / (PI * PI * r.powi(4))) < 1e-8);
    }

    #[test]
    fn green_bounds_collapse_on_flat_space(m in 2u32..5, rho in 1e-2f64..1e2) {
        let b = green_bounds(&ConnectedSumModel::euclidean(m), rho).unwrap();
        let g = green_euclidean(rho, m).unwrap();
        prop_assert!(rel(b.lower, g) < 1e-8 && rel(b.upper, g) < 1e-8);
    }

    #[test]
    fn exact_constants_reproduce_the_kernel(m in 2u32..4, lt in -2.0f64..2.0, rho in 0.0f64..10.0) {
        let t = 10f64.powf(lt);
        let env = hk_two_sided(&ConnectedSumModel::euclidean(m), t, rho).unwrap();
        let p = euclidean_heat_kernel(t, rho, m).unwrap();
        // Relative comparison is meaningful only for normal floats.
        prop_assume!(p > 1e10 * f64::MIN_POSITIVE);
        prop_assert!(rel(env.lower, p) < 1e-10 && rel(env.upper, p) < 1e-10);
    }

    #[test]
    fn integral_estimates_hold_on_flat_profiles(m in 2u32..4, mu_i in 0usize..4, r in 1.01f64..100.0) {
        let mu = [0.25, 1.0, 4.0, 16.0][mu_i];
        let p = VolumeProfile::euclidean(m);
        prop_assert!(est1_check(&p, m, mu, &[r]).unwrap().min_slack >= 1.0);
        prop_assert!(est2_check(&p, m, mu, &[r]).unwrap().min_slack >= 1.0);
    }

    #[test]
    fn ahlfors_shimizu_identity(m in 2u32..4, lt in -1.0f64..2.0) {
        let t = 10f64.powf(lt);
        let w = ahlfors_shimizu_weight(&VolumeProfile::euclidean(m), &HeatBoundConstants::euclidean(m), m, t).unwrap();
        prop_assert!(rel(w, t.powi(-2 * m as i32)) < 1e-8);
    }

    #[test]
    fn exhaustion_is_nested(p in profile(), r in 0.1f64..20.0, f in 1.001f64..4.0) {
        let m = 2;
        let model = ConnectedSumModel::new(m, vec![End::flat(VolumeProfile::euclidean(m)), End::flat(p)], 1.0, HeatBoundConstants::euclidean(m)).unwrap();
        let (l0, l1) = (level(&model, r).unwrap(), level(&model, r * f).unwrap());
        prop_assert!(l1 < l0);
        let g = g_r_on_inner_sphere(&model, r, r * f).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!(rel(g + l1, l0) < 1e-9);
    }

    #[test]
    fn quadrature_refinement_within_error_estimate(a in 0.1f64..5.0, b in 0.1f64..3.0, k in 0.5f64..6.0) {
        let f = |x: f64| (-a * x).exp() * (k * x).cos() + b / (1.0 + x * x);
        let coarse = quad::integrate(&f, 0.0, 10.0, Tolerance::rel(1e-6));
        let fine = quad::integrate(&f, 0.0, 10.0, Tolerance::rel(5e-7));
        prop_assert!(coarse.converged && fine.converged);
        prop_assert!((coarse.value - fine.value).abs() <= coarse.error + fine.error + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn characteristic_and_counting_are_monotone(f in line_map(), p in cpx(), r in 0.5f64..50.0, g in 1.01f64..3.0) {
        let pt = P1Point::Finite { re: p.re, im: p.im };
        let d = DivisorSpec::points(&[pt]).unwrap();
        prop_assume!(d.log_inv_norm(f.f_at_o()).is_finite());
        let b = Budget::default();
        let t = |r: f64| characteristic_t(&f, r, &b).unwrap().value;
        prop_assert!(t(r * g) >= t(r) - 1e-10);
        let (n0, n1) = (counting_n(&f, &d, r).unwrap().value, counting_n(&f, &d, r * g).unwrap().value);
        prop_assert!(n1 >= n0 - 1e-12);
        let nb = counting_nbar(&f, &d, r).unwrap().value;
        prop_assert!(nb <= n0 + 1e-12);
        // N ≤ T + boundary term, since m ≥ 0.
        prop_assert!(n0 <= t(r) + d.log_inv_norm(f.f_at_o()) + 1e-6);
    }

    #[test]
    fn first_main_theorem_holds(f in line_map(), p in cpx(), r in 0.5f64..30.0) {
        let pt = P1Point::Finite { re: p.re, im: p.im };
        let d = DivisorSpec::points(&[pt, P1Point::Infinity]).unwrap();
        prop_assume!(d.log_inv_norm(f.f_at_o()).is_finite());
        let rep = fmt_residual(&f, &d, r, &Budget::default()).unwrap();
        prop_assert!(rep.residual < 1e-6 * (1.0 + rep.t), "{:?}", rep);
    }

    #[test]
    fn xi_is_a_quarter_on_flat_space(r in 1e-2f64..1e4) {
        let model = ConnectedSumModel::euclidean(2);
        prop_assert!((xi(&model, r, 0.0).unwrap() - 0.25).abs() < 1e-8);
    }

    #[test]
    fn e_growth_is_constant_for_power_laws(c in 0.1f64..10.0, alpha in 2.2f64..8.0, r in 0.1f64..1e3) {
        let p = VolumeProfile::power(c, alpha);
        prop_assert!(rel(e_growth(&p, r).unwrap(), 1.0 / (alpha - 2.0)) < 1e-6);
    }

    #[test]
    fn brownian_summaries_ignore_thread_count(seed in any::<u64>(), threads in 2usize..4) {
        let model = ConnectedSumModel::euclidean(2);
        let cfg = PathConfig { step: 0.01, ..PathConfig::for_radius(1.0, 64, seed) };
        let run = |n: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| simulate_exit(&model, 1.0, &cfg, &[]).unwrap())
        };
        prop_assert_eq!(run(1), run(threads));
    }
}
