use std::f64::consts::PI;

use nevlab::model_geometry::*;
use nevlab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

fn flat_point(coords: Vec<f64>) -> SheetPoint {
    SheetPoint::new(1, coords)
}

#[test]
fn volume_examples() {
    let v = volume(&VolumeProfile::euclidean(2), 1.0).unwrap();
    assert!(close(v, PI * PI / 2.0, 1e-14));
    assert!(close(volume(&VolumeProfile::power(1.0, 3.0), 2.0).unwrap(), 8.0, 1e-14));
    assert_eq!(volume(&VolumeProfile::euclidean(3), 0.0).unwrap(), 0.0);
    assert!(matches!(volume(&VolumeProfile::euclidean(2), -1.0), Err(Error::InvalidArgument(_))));
}

#[test]
fn spaceform_volume_matches_sinh_integral() {
    let p = VolumeProfile::spaceform(-1.0, 4);
    let oracle = 2.0 * PI * PI * simpson(|t: f64| t.sinh().powi(3), 0.0, 1.0, 4000);
    assert!(close(volume(&p, 1.0).unwrap(), oracle, 1e-10));
    // ∫₀^r sinh³ = cosh³r/3 − cosh r + 2/3.
    for &r in &[0.01, 3.0, 50.0, 300.0] {
        let ch = f64::cosh(r);
        let exact = if r < 1.0 {
            2.0 * PI * PI * simpson(|t: f64| t.sinh().powi(3), 0.0, r, 200)
        } else {
            2.0 * PI * PI * (ch.powi(3) / 3.0 - ch + 2.0 / 3.0)
        };
        let ln_exact = if r > 100.0 { (2.0 * PI * PI / 24.0).ln() + 3.0 * r } else { exact.ln() };
        assert!((p.ln_volume(r) - ln_exact).abs() < 1e-9 * ln_exact.abs().max(1.0), "r={r}");
    }
    let k4 = VolumeProfile::spaceform(-4.0, 3);
    let oracle = 4.0 * PI * simpson(|t: f64| ((2.0 * t).sinh() / 2.0).powi(2), 0.0, 1.5, 4000);
    assert!(close(volume(&k4, 1.5).unwrap(), oracle, 1e-10));
}

#[test]
fn profiles_are_strictly_increasing() {
    let tab = TabulatedProfile::new(vec![0.5, 1.0, 2.0, 4.0, 8.0], vec![0.1, 1.0, 9.0, 70.0, 600.0]).unwrap();
    let profiles = [
        VolumeProfile::euclidean(2),
        VolumeProfile::power(2.0, 3.5),
        VolumeProfile::spaceform(-1.0, 4),
        VolumeProfile::PowerLog { c: 1.0, alpha: 4.0, beta: 1.0 },
        VolumeProfile::Tabulated(tab),
    ];
    let radii: Vec<f64> = (1..=1000).map(|i| 1e-3 * 1.0093f64.powi(i)).collect();
    for p in &profiles {
        let vals: Vec<f64> = radii.iter().map(|&r| volume(p, r).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0], "{p:?}");
        }
    }
}

#[test]
fn tabulated_profile_reproduces_power_laws() {
    let radii: Vec<f64> = (0..8).map(|i| 2f64.powi(i)).collect();
    let vols: Vec<f64> = radii.iter().map(|r| 3.0 * r.powi(4)).collect();
    let tab = TabulatedProfile::new(radii, vols).unwrap();
    for &r in &[0.3, 1.7, 5.0, 100.0, 1e4] {
        assert!(close(tab.ln_volume(r).exp(), 3.0 * f64::powi(r, 4), 1e-10), "r={r}");
    }
    assert!((tab.tail_exponent() - 4.0).abs() < 1e-12);
    assert!(tab.non_parabolic().unwrap());
}

#[test]
fn non_parabolicity_examples() {
    assert!(non_parabolic(&VolumeProfile::euclidean(2)).unwrap());
    assert!(!non_parabolic(&VolumeProfile::power(1.0, 2.0)).unwrap());
    assert!(non_parabolic(&VolumeProfile::power(1.0, 4.0)).unwrap());
    assert!(!non_parabolic(&VolumeProfile::PowerLog { c: 1.0, alpha: 2.0, beta: 1.0 }).unwrap());
    assert!(non_parabolic(&VolumeProfile::PowerLog { c: 1.0, alpha: 2.0, beta: 2.0 }).unwrap());
    assert!(non_parabolic(&VolumeProfile::spaceform(-1.0, 3)).unwrap());

    let radii: Vec<f64> = (0..6).map(|i| 2f64.powi(i)).collect();
    let near: Vec<f64> = radii.iter().map(|r| r.powf(2.02)).collect();
    let tab = TabulatedProfile::new(radii.clone(), near).unwrap();
    assert!(matches!(non_parabolic(&VolumeProfile::Tabulated(tab)), Err(Error::Undecidable(_))));
    let short = TabulatedProfile::new(radii[..3].to_vec(), vec![1.0, 16.0, 256.0]).unwrap();
    assert!(matches!(non_parabolic(&VolumeProfile::Tabulated(short)), Err(Error::Undecidable(_))));
    let slow: Vec<f64> = radii.iter().map(|r| r.powf(1.5)).collect();
    assert!(!non_parabolic(&VolumeProfile::Tabulated(TabulatedProfile::new(radii, slow).unwrap())).unwrap());
}

#[test]
fn parabolic_end_is_rejected() {
    let ends = vec![End::flat(VolumeProfile::euclidean(2)), End::flat(VolumeProfile::power(1.0, 2.0))];
    let r = ConnectedSumModel::new(2, ends, 1.0, nevlab::heat_green::HeatBoundConstants::euclidean(2));
    assert!(matches!(r, Err(Error::Hypothesis(_))));
}

#[test]
fn seam_distance_between_sheets() {
    let model = ConnectedSumModel::glued_euclidean(2, 2);
    let x = model.point(1, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
    let y = model.point(2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
    let d = model.distances(&x, &y).unwrap();
    assert!(d.d_empty.is_infinite());
    assert!((d.d_plus - 2.0).abs() < 1e-9 && (d.d - 2.0).abs() < 1e-9);

    // Hyperspherical grid over the seam sphere S³.
    let n = 240;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let a = PI * i as f64 / n as f64;
        for j in 0..=n {
            let b = PI * j as f64 / n as f64;
            for k in 0..2 * n {
                let c = PI * k as f64 / n as f64;
                let p = [a.cos(), a.sin() * b.cos(), a.sin() * b.sin() * c.cos(), a.sin() * b.sin() * c.sin()];
                let dist = |q: &[f64]| q.iter().zip(&p).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                best = best.min(dist(&x.coords) + dist(&y.coords));
            }
        }
    }
    assert!(best >= d.d_plus - 1e-12 && best < d.d_plus + 1e-3, "grid {best} vs {}", d.d_plus);
}

#[test]
fn coincident_points() {
    let model = ConnectedSumModel::glued_euclidean(2, 2);
    let x = model.point(1, vec![0.0, 3.0, 0.0, 0.0]).unwrap();
    let d = model.distances(&x, &x).unwrap();
    assert_eq!((d.d, d.d_empty), (0.0, 0.0));
    assert!((d.d_plus - 4.0).abs() < 1e-9);
}

/// Shortest planar path around the unit disc by Dijkstra on a visibility graph
/// whose nodes are the endpoints and `n` points of the circle.
fn visibility_path(x: [f64; 2], y: [f64; 2], n: usize) -> f64 {
    let mut nodes = vec![x, y];
    for k in 0..n {
        let a = 2.0 * PI * k as f64 / n as f64;
        nodes.push([a.cos(), a.sin()]);
    }
    let visible = |p: [f64; 2], q: [f64; 2]| {
        let d = [q[0] - p[0], q[1] - p[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        if l2 == 0.0 {
            return true;
        }
        let s = (-(p[0] * d[0] + p[1] * d[1]) / l2).clamp(0.0, 1.0);
        let c = [p[0] + s * d[0], p[1] + s * d[1]];
        (c[0] * c[0] + c[1] * c[1]).sqrt() >= 1.0 - 1e-9
    };
    let len = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let arc = 2.0 * PI / n as f64;
    let mut dist = vec![f64::INFINITY; nodes.len()];
    let mut done = vec![false; nodes.len()];
    dist[0] = 0.0;
    for _ in 0..nodes.len() {
        let u = (0..nodes.len()).filter(|&i| !done[i]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
        done[u] = true;
        for v in 0..nodes.len() {
            if done[v] {
                continue;
            }
            let w = if u >= 2 && v >= 2 {
                let k = (u as i64 - v as i64).rem_euclid(n as i64);
                if k == 1 || k == n as i64 - 1 {
                    arc
                } else {
                    continue;
                }
            } else if visible(nodes[u], nodes[v]) {
                len(nodes[u], nodes[v])
            } else {
                continue;
            };
            dist[v] = dist[v].min(dist[u] + w);
        }
    }
    dist[1]
}

#[test]
fn tangent_arc_tangent_path() {
    let model = ConnectedSumModel::glued_euclidean(2, 2);
    let x = model.point(1, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
    let y = model.point(1, vec![0.0, -2.0, 0.0, 0.0]).unwrap();
    let d = model.distances(&x, &y).unwrap();
    let oracle = visibility_path([0.0, 2.0], [0.0, -2.0], 4000);
    assert!((d.d_empty - oracle).abs() < 1e-5, "{} vs {oracle}", d.d_empty);
    assert!((d.d_empty - (2.0 * 3f64.sqrt() + PI / 3.0)).abs() < 1e-12);
    assert!(d.d <= d.d_empty);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0));
        let (ta, tb) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        let p = [a * ta.cos(), a * ta.sin()];
        let q = [b * tb.cos(), b * tb.sin()];
        // The same plane embedded obliquely in ℝ⁴.
        let lift = |v: [f64; 2]| vec![0.6 * v[0], 0.8 * v[0], 0.8 * v[1], -0.6 * v[1]];
        let got = avoiding_distance(&lift(p), &lift(q), 1.0);
        let oracle = visibility_path(p, q, 4000);
        assert!((got - oracle).abs() < 1e-5, "{p:?} {q:?}: {got} vs {oracle}");
    }
}

#[test]
fn distances_reject_points_inside_the_seam_ball() {
    let model = ConnectedSumModel::glued_euclidean(2, 2);
    assert!(matches!(model.point(1, vec![0.5, 0.0, 0.0, 0.0]), Err(Error::InvalidArgument(_))));
    let inside = SheetPoint::new(1, vec![0.2, 0.0, 0.0, 0.0]);
    let ok = model.point(2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(model.distances(&inside, &ok).is_err());
}

#[test]
fn h_function_examples() {
    let flat = ConnectedSumModel::euclidean(2);
    let x = flat_point(vec![1.0, 0.0, 0.0, 0.0]);
    assert!(close(h_function(&flat, &x, 0.5).unwrap(), 2.0 / (PI * PI), 1e-13));
    // 2/π² + ∫₁⁴ ds/(π²s²/2), the second term by Simpson.
    let oracle = 2.0 / (PI * PI) + simpson(|s: f64| 2.0 / (PI * PI * s * s), 1.0, 4.0, 2000);
    let h = h_function(&flat, &x, 4.0).unwrap();
    assert!(close(h, oracle, 1e-10), "{h} vs {oracle}");
    assert!(close(h, 7.0 / (2.0 * PI * PI), 1e-10));
    let small = ConnectedSumModel::new(
        2,
        vec![End::flat(VolumeProfile::power(0.01, 4.0))],
        0.0,
        nevlab::heat_green::HeatBoundConstants::euclidean(2),
    )
    .unwrap();
    let x3 = flat_point(vec![3.0, 0.0, 0.0, 0.0]);
    assert_eq!(h_function(&small, &x3, 5.0).unwrap(), 1.0);
    assert!(h_function(&flat, &x, 0.0).is_err());
}

#[test]
fn liouville_envelope_examples() {
    let flat = ConnectedSumModel::euclidean(2);
    let at = |r: f64| liouville_envelope(&flat, &flat_point(vec![r, 0.0, 0.0, 0.0])).unwrap();
    let oracle = 1.0 + simpson(|t: f64| 2.0 / (PI * PI * t * t), 1.0, 2.0, 2000);
    assert!(close(at(2.0), oracle, 1e-10));
    assert!(close(at(2.0), 1.0 + 1.0 / (PI * PI), 1e-10));
    assert_eq!(at(1.0), 1.0);
    assert_eq!(at(0.5), 1.0);
    let lim = liouville_envelope_limit(&VolumeProfile::euclidean(2)).unwrap();
    assert!(close(lim, 1.0 + 2.0 / (PI * PI), 1e-9));
    assert!(at(1e6) < lim && lim - at(1e6) < 1e-5);
}

#[test]
fn almost_complex_examples() {
    assert!(almost_complex_obstruction(&[3, 3], &[1, 1], 1).unwrap());
    assert!(!almost_complex_obstruction(&[3], &[1], 1).unwrap());
    assert!(!almost_complex_obstruction(&[3, 3, 3], &[1, 1, 1], 1).unwrap());
    assert!(almost_complex_obstruction(&[], &[], 1).is_err());
    assert!(almost_complex_obstruction(&[3], &[1, 1], 1).is_err());
}

#[test]
fn even_sums_of_almost_complex_summands_are_obstructed() {
    for k in 1..=4u32 {
        let sign: i64 = if k % 2 == 0 { 1 } else { -1 };
        let summands: Vec<(i64, i64)> = (-6i64..=6)
            .flat_map(|c| (-6i64..=6).map(move |t| (c, t)))
            .filter(|&(c, t)| (c - sign * t).rem_euclid(4) == 0)
            .collect();
        for theta in [2usize, 4] {
            for start in 0..summands.len() {
                let pick: Vec<(i64, i64)> = (0..theta).map(|i| summands[(start + 7 * i) % summands.len()]).collect();
                let chis: Vec<i64> = pick.iter().map(|p| p.0).collect();
                let taus: Vec<i64> = pick.iter().map(|p| p.1).collect();
                assert!(almost_complex_obstruction(&chis, &taus, k).unwrap(), "{chis:?} {taus:?} k={k}");
            }
        }
    }
}

#[test]
fn volume_comparison_examples() {
    let grid: Vec<f64> = (0..40).map(|i| 0.1 * 1.2f64.powi(i)).collect();
    let flat = volume_comparison_check(&VolumeProfile::euclidean(2), 0.0, 4, &grid).unwrap();
    assert!(flat.holds());
    assert!(flat.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12));

    let g1: Vec<f64> = grid.iter().cloned().filter(|&r| r >= 1.0).collect();
    let p = volume_comparison_check(&VolumeProfile::power(1.0, 3.0), 0.0, 4, &g1).unwrap();
    assert!(p.ratio_increases.is_empty() && p.worst_step < 1.0);
    for row in &p.rows {
        assert!(close(row.ratio, 2.0 / (PI * PI * row.r), 1e-12));
    }

    let hyp = volume_comparison_check(&VolumeProfile::spaceform(-1.0, 4), 0.0, 4, &grid).unwrap();
    assert!(!hyp.holds());
    assert!(hyp.volume_excess.contains(&(grid.len() - 1)));
    assert!(!hyp.ratio_increases.is_empty());
    let same = volume_comparison_check(&VolumeProfile::spaceform(-1.0, 4), -1.0, 4, &grid).unwrap();
    assert!(same.holds());
}
