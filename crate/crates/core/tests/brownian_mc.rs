use nevlab::brownian::{
    dynkin_check, exit_time_summary, harmonic_uniformity, heat_kernel_estimate, martingale_check, occupation_density,
    read_path_dump, sheet_mass, simulate_exit, simulate_free, write_path_dump, Observers, PathConfig, RadialBins,
    TestFunction,
};
use nevlab::exhaustion::hyperplane_slice_integral;
use nevlab::model_geometry::ConnectedSumModel;

fn cfg(r: f64, n: usize, seed: u64) -> PathConfig {
    PathConfig::for_radius(r, n, seed)
}

fn coarse(r: f64, n: usize, seed: u64) -> PathConfig {
    PathConfig { step: 1e-3 * r * r, ..cfg(r, n, seed) }
}

#[test]
fn mean_exit_time_and_uniform_exits() {
    let m = ConnectedSumModel::euclidean(2);
    let recs = simulate_exit(&m, 1.0, &cfg(1.0, 100_000, 1), &[]).unwrap();
    let s = exit_time_summary(&recs);
    assert_eq!(s.censored, 0);
    assert!((s.mean / 0.25 - 1.0).abs() < 0.02, "{s:?}");
    for r in &recs {
        assert!((r.exit_point.norm() - 1.0).abs() < 1e-4 && r.exit_time > 0.0);
    }
    let u = harmonic_uniformity(&m, &recs, 4, 5).unwrap();
    assert_eq!(u.dof, 19);
    assert!(u.p_value > 0.01, "{u:?}");
}

#[test]
fn exit_time_scales_as_r_squared() {
    let m = ConnectedSumModel::euclidean(2);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &r in &[0.5f64, 1.0, 2.0, 4.0] {
        let s = exit_time_summary(&simulate_exit(&m, r, &coarse(r, 4000, 9), &[]).unwrap());
        xs.push(r.ln());
        ys.push(s.mean.ln());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!((slope - 2.0).abs() < 0.02, "{slope}");
}

#[test]
fn dynkin_harmonic_functions_balance() {
    let m = ConnectedSumModel::euclidean(2);
    for phi in [TestFunction::Coordinate { index: 1 }, TestFunction::QuadraticHarmonic] {
        for &r in &[1.0, 3.0] {
            let rep = dynkin_check(&m, r, &phi, &coarse(r, 5000, 2)).unwrap();
            assert_eq!(rep.rhs, 0.0);
            assert!(rep.within(3.5), "{phi:?} {rep:?}");
        }
    }
}

#[test]
fn dynkin_norm_squared() {
    let m = ConnectedSumModel::euclidean(2);
    let rep = dynkin_check(&m, 1.0, &TestFunction::NormSquared, &coarse(1.0, 2000, 3)).unwrap();
    assert!((rep.rhs - 1.0).abs() < 1e-9);
    assert!((rep.lhs - 1.0).abs() < 1e-9);
}

#[test]
fn dynkin_log_norm_off_centre() {
    let m = ConnectedSumModel::euclidean(2);
    let phi = TestFunction::LogNorm { shift: vec![1.0, 0.0, 0.0, 0.0] };
    for &r in &[2.0f64, 4.0] {
        let rep = dynkin_check(&m, r, &phi, &coarse(r, 20_000, 4)).unwrap();
        // ℝ⁴ sphere means of ‖·‖⁻² are 1/max(s,1)², so ½∫g_r Δφ has a closed form.
        let exact = r.ln() + 0.25 / (r * r);
        assert!((rep.rhs - exact).abs() < 1e-8, "{} vs {exact}", rep.rhs);
        assert!(rep.within(3.0), "{rep:?}");
    }
}

#[test]
fn dynkin_log_affine_is_jensen() {
    let m = ConnectedSumModel::euclidean(2);
    let phi = TestFunction::LogAbsAffine { a: vec![[1.0, 0.0], [0.0, 0.0]], c: [1.0, 0.0] };
    let r = 3.0;
    let rep = dynkin_check(&m, r, &phi, &coarse(r, 20_000, 5)).unwrap();
    assert!((rep.rhs - hyperplane_slice_integral(2, 1.0, r).unwrap()).abs() < 1e-12);
    assert!(rep.within(3.0), "{rep:?}");
}

#[test]
fn log_at_pole_is_rejected() {
    let m = ConnectedSumModel::euclidean(2);
    let phi = TestFunction::LogNorm { shift: vec![0.0; 4] };
    assert!(dynkin_check(&m, 1.0, &phi, &coarse(1.0, 10, 0)).is_err());
}

#[test]
fn martingale_for_harmonic_functions() {
    let m = ConnectedSumModel::euclidean(2);
    let times = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];
    let pts = martingale_check(&m, 1.0, &TestFunction::QuadraticHarmonic, &times, &coarse(1.0, 5000, 6)).unwrap();
    for p in &pts {
        assert!(p.mean.abs() <= 3.5 * p.se.max(1e-12), "{p:?}");
    }
    assert!(martingale_check(&m, 1.0, &TestFunction::NormSquared, &times, &coarse(1.0, 10, 6)).is_err());
}

#[test]
fn occupation_density_matches_green() {
    let m = ConnectedSumModel::euclidean(2);
    let r = 2.0;
    let bins = RadialBins::uniform(0.0, 2.5, 25);
    let rep = occupation_density(&m, r, &bins, &coarse(r, 20_000, 7)).unwrap();
    assert!(rep.l1_error < 0.05, "{}", rep.l1_error);
    assert!(rep.empty_bins.is_empty());
    for b in rep.bins.iter().filter(|b| b.lo >= r) {
        assert_eq!(b.estimate, 0.0);
        assert_eq!(b.exact, 0.0);
    }
}

#[test]
fn occupation_error_shrinks_with_paths() {
    let m = ConnectedSumModel::euclidean(2);
    let r = 2.0;
    let bins = RadialBins::uniform(0.0, 2.0, 10);
    let mean_err = |n: usize| {
        (0..4u64).map(|s| occupation_density(&m, r, &bins, &coarse(r, n, 100 + s)).unwrap().l1_error).sum::<f64>() / 4.0
    };
    let (e1, e4) = (mean_err(1000), mean_err(4000));
    let ratio = e4 / e1;
    assert!(ratio > 0.3 && ratio < 0.75, "{e1} {e4} {ratio}");
}

#[test]
fn flat_heat_kernel_bins() {
    let m = ConnectedSumModel::euclidean(2);
    let bins = RadialBins::uniform(0.0, 10.0, 20);
    let c = PathConfig { step: 0.05, n_paths: 40_000, horizon: 10.0, seed: 8, ..cfg(1.0, 1, 0) };
    let est = heat_kernel_estimate(&m, 1.0, &bins, &c).unwrap();
    for b in &est.bins {
        let exact = b.exact.unwrap();
        assert!((b.estimate - exact).abs() <= 3.5 * b.se.max(1e-6), "{b:?}");
        let env = b.envelope.unwrap();
        assert!(env.lower <= env.upper);
    }
    assert!((est.mass - (1.0 - est.censored_fraction)).abs() < 3.0 * est.mass_se + 2e-3, "{est:?}");
    let short = PathConfig { step: 0.5, ..c };
    assert!(heat_kernel_estimate(&m, 1.0, &bins, &short).is_err());
}

#[test]
fn two_sheet_exit_mass_is_even() {
    let m = ConnectedSumModel::glued_euclidean(2, 2);
    let r = 4.0;
    let c = PathConfig { step: 4e-3, ..cfg(r, 4000, 10) };
    let recs = simulate_exit(&m, r, &c, &[]).unwrap();
    let s = sheet_mass(&recs, 2);
    assert!((s.fractions[0] - 0.5).abs() <= 3.0 * s.se[0], "{s:?}");
    // Neumann radial oracle from the seam: (b² − R²)²/(4b²) with b = R + r.
    let e = exit_time_summary(&recs);
    let b = 5.0f64;
    let want = (b * b - 1.0).powi(2) / (4.0 * b * b);
    assert!((e.mean - want).abs() < 4.0 * e.se + 0.01 * want, "{e:?} {want}");
}

#[test]
fn two_sheet_kernel_symmetric_and_occupancy_even() {
    let m = ConnectedSumModel::glued_euclidean(2, 2);
    let bins = RadialBins::uniform(1.0, 5.0, 8);
    let c = PathConfig { step: 0.01, n_paths: 20_000, horizon: 10.0, seed: 12, ..cfg(1.0, 1, 0) };
    let est = heat_kernel_estimate(&m, 1.0, &bins, &c).unwrap();
    let (a, b) = est.bins.split_at(8);
    for (x, y) in a.iter().zip(b) {
        assert!((x.estimate - y.estimate).abs() <= 3.0 * (x.se * x.se + y.se * y.se).sqrt() + 1e-12, "{x:?} {y:?}");
    }
    let free = simulate_free(&m, 4.0, &c, &Observers::default()).unwrap();
    let on1 = free.iter().filter(|p| p.sheet == 1).count() as f64 / free.len() as f64;
    assert!((on1 - 0.5).abs() <= 3.0 * (0.25 / free.len() as f64).sqrt(), "{on1}");
}

#[test]
fn single_sheet_seam_rule_keeps_sheet() {
    let ends = vec![nevlab::model_geometry::End::flat(nevlab::model_geometry::VolumeProfile::euclidean(2))];
    let m = ConnectedSumModel::new(2, ends, 1.0, nevlab::heat_green::HeatBoundConstants::euclidean(2)).unwrap();
    let c = PathConfig { step: 0.01, n_paths: 200, horizon: 10.0, seed: 1, ..cfg(1.0, 1, 0) };
    for p in simulate_free(&m, 2.0, &c, &Observers::default()).unwrap() {
        assert_eq!(p.sheet, 1);
        assert!(p.coords.iter().map(|v| v * v).sum::<f64>() >= 1.0 - 1e-12);
    }
}

#[test]
fn path_dump_round_trip() {
    let m = ConnectedSumModel::euclidean(2);
    let recs = simulate_exit(&m, 1.0, &coarse(1.0, 50, 77), &[]).unwrap();
    let mut buf = Vec::new();
    write_path_dump(&mut buf, 77, &recs).unwrap();
    let (seed, back) = read_path_dump(buf.as_slice()).unwrap();
    assert_eq!(seed, 77);
    assert_eq!(back.len(), 50);
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.exit_time, b.exit_time);
        assert_eq!(a.exit_point.coords, b.coords);
    }
}

#[test]
fn path_integrals_recover_exit_time() {
    let m = ConnectedSumModel::euclidean(2);
    let one = |_: usize, _: &[f64]| 1.0;
    let recs = simulate_exit(&m, 1.0, &coarse(1.0, 100, 13), &[&one]).unwrap();
    for r in &recs {
        assert!((r.path_integrals[0] - r.exit_time).abs() < 1e-9 * r.exit_time.max(1.0));
    }
}

#[cfg(feature = "parallel")]
#[test]
fn results_independent_of_thread_count() {
    let m = ConnectedSumModel::glued_euclidean(2, 2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_exit(&m, 4.0, &PathConfig { step: 0.02, ..cfg(4.0, 300, 99) }, &[]).unwrap())
    };
    assert_eq!(run(1), run(4));
}
