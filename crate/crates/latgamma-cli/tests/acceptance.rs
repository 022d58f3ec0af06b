//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them all).

use latgamma::coarsegrain::{classify, CoarseGrainParams, CubeLabel};
use latgamma::energy::{canonical_shift_set, shift_counts_fft};
use latgamma::field::{AxisBound, HalfSpaceCut, SpinField, TargetSet};
use latgamma::gammalab::{
    halfspace_experiment, perforation_counterexample, polytope_experiment, HalfspaceOptions,
    Schedule,
};
use latgamma::kernel::{unit_directions, Kernel, QuadratureSpec};
use latgamma::lattice::PeriodicLattice;
use latgamma::util::lsq_slope;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn ball(d: usize) -> Kernel {
    Kernel::ball(d, 1.0).unwrap()
}

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion}: PASS ({detail})");
}

/// 1. closed-form 1d half-space: eta/eps = 100, restricted window of 2 eta,
///    normalized energy = 0.99 = M (M+1) (eps/eta)^2 with M = 99; under 1 s.
#[test]
fn criterion_01_halfspace_1d_closed_form() {
    let start = Instant::now();
    let sched = Schedule::explicit(vec![(0.001, 0.1)], 0.8, "single").unwrap();
    let report =
        halfspace_experiment(&ball(1), &[1.0], &sched, &HalfspaceOptions::default()).unwrap();
    let normalized = report.steps[0].normalized.unwrap();
    let elapsed = start.elapsed();
    assert!(
        (normalized - 0.99).abs() <= 1e-12,
        "normalized {normalized} differs from 0.99"
    );
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass("1 (1d closed form)", format!("normalized = {normalized:.15}, {elapsed:?}"));
}

/// 2. 2d half-space convergence: eta = sqrt(eps) down to eta/eps = 64,
///    final normalized energy within 3% of 4/3, fft path, under 2 minutes.
#[test]
fn criterion_02_halfspace_2d_convergence() {
    let start = Instant::now();
    let sched = Schedule::sqrt_rule(1.0 / 256.0, 5, 0.5, 0.5).unwrap();
    let final_ratio = sched.steps.last().unwrap().1 / sched.steps.last().unwrap().0;
    assert_eq!(final_ratio, 64.0);
    let report =
        halfspace_experiment(&ball(2), &[1.0, 0.0], &sched, &HalfspaceOptions::default()).unwrap();
    let last = report.steps.last().unwrap();
    let rel = last.rel_error.unwrap();
    let elapsed = start.elapsed();
    assert!(rel <= 0.03, "final relative error {rel}");
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass(
        "2 (2d half-space convergence)",
        format!(
            "final normalized = {:.6} vs 4/3, rel err = {:.4}%, {elapsed:?}",
            last.normalized.unwrap(),
            rel * 100.0
        ),
    );
}

/// 3. isotropy: phi over 16 directions varies at most 1% at h = 1/256, and
///    half-space energies across 4 directions agree within 4%.
#[test]
fn criterion_03_isotropy() {
    let k = ball(2);
    let q = QuadratureSpec::new(k.support_radius() / 256.0, k.support_radius());
    let values: Vec<f64> =
        unit_directions(2, 16).iter().map(|nu| k.phi(nu, &q).unwrap()).collect();
    let mx = values.iter().cloned().fold(f64::MIN, f64::max);
    let mn = values.iter().cloned().fold(f64::MAX, f64::min);
    let phi_spread = (mx - mn) / values[0];
    assert!(phi_spread <= 0.01, "phi spread {phi_spread}");

    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s5 = 5.0f64.sqrt();
    let dirs: [Vec<f64>; 4] =
        [vec![1.0, 0.0], vec![0.0, 1.0], vec![s2, s2], vec![2.0 / s5, 1.0 / s5]];
    let sched = Schedule::explicit(vec![(1.0 / 1024.0, 1.0 / 32.0)], 0.25, "single").unwrap();
    let energies: Vec<f64> = dirs
        .iter()
        .map(|nu| {
            halfspace_experiment(&k, nu, &sched, &HalfspaceOptions::default())
                .unwrap()
                .steps[0]
                .normalized
                .unwrap()
        })
        .collect();
    let emax = energies.iter().cloned().fold(f64::MIN, f64::max);
    let emin = energies.iter().cloned().fold(f64::MAX, f64::min);
    let dir_spread = (emax - emin) / emin;
    assert!(dir_spread <= 0.04, "direction spread {dir_spread}, energies {energies:?}");
    pass(
        "3 (isotropy)",
        format!("phi spread = {:.4}%, direction spread = {:.3}%", phi_spread * 100.0, dir_spread * 100.0),
    );
}

/// Independent pair-count oracle with its own index arithmetic.
fn brute_count(f: &SpinField, xi: &[i64]) -> u64 {
    let d = f.dim();
    let exts: Vec<i64> = f.extents().iter().map(|&n| n as i64).collect();
    let per: Vec<bool> = f.boundary().iter().map(|b| b.is_periodic()).collect();
    let total: i64 = exts.iter().product();
    let mut count = 0u64;
    for flat in 0..total {
        let mut rem = flat;
        let mut rel = vec![0i64; d];
        for a in (0..d).rev() {
            rel[a] = rem % exts[a];
            rem /= exts[a];
        }
        let mut prel = vec![0i64; d];
        let mut ok = true;
        for a in 0..d {
            let mut c = rel[a] + xi[a];
            if per[a] {
                c = c.rem_euclid(exts[a]);
            } else if c < 0 || c >= exts[a] {
                ok = false;
                break;
            }
            prel[a] = c;
        }
        if !ok {
            continue;
        }
        let si = rel.iter().zip(&exts).fold(0i64, |acc, (&c, &n)| acc * n + c) as usize;
        let sj = prel.iter().zip(&exts).fold(0i64, |acc, (&c, &n)| acc * n + c) as usize;
        if f.values()[si] != f.values()[sj] {
            count += 1;
        }
    }
    count
}

/// 4. fft/direct exactness: on 50 seeded random fields every N_xi from the
///    fft path equals the brute-force pair count exactly.
#[test]
fn criterion_04_fft_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked_shifts = 0usize;
    for case in 0..50 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let max_ext = if d == 2 { 32 } else { 16 };
        let extents: Vec<usize> = (0..d).map(|_| rng.gen_range(4..=max_ext)).collect();
        let boundary: Vec<AxisBound> = (0..d)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    AxisBound::Restricted
                } else {
                    AxisBound::periodic(d)
                }
            })
            .collect();
        let total: usize = extents.iter().product();
        let values: Vec<u8> = (0..total).map(|_| rng.gen_range(0..=1)).collect();
        let f = SpinField::from_values(PeriodicLattice::cubic(d), 0.1, &extents, &boundary, values)
            .unwrap();
        let shifts = canonical_shift_set(d, 4.3);
        let counts = shift_counts_fft(&f, &shifts).unwrap();
        for (xi, &n) in shifts.iter().zip(&counts) {
            assert_eq!(
                n,
                brute_count(&f, xi),
                "case {case}: d={d} extents={extents:?} xi={xi:?}"
            );
        }
        checked_shifts += shifts.len();
    }
    pass("4 (fft/direct exactness)", format!("50 fields, {checked_shifts} shift counts, all exact"));
}

/// 5. counterexample exactness: perforation (N=2, d=2) and (N=3, d=1) give
///    exactly zero masked energy and box averages exactly 1 - 1/N^d.
#[test]
fn criterion_05_counterexample_exactness() {
    let sched =
        Schedule::explicit(vec![(1.0 / 64.0, 1.0 / 8.0), (1.0 / 256.0, 1.0 / 16.0)], 0.5, "sqrt")
            .unwrap();
    for (n, d) in [(2u32, 2usize), (3, 1)] {
        let report = perforation_counterexample(n, d, &sched).unwrap();
        let expected = ((n as f64).powi(d as i32) - 1.0) / (n as f64).powi(d as i32);
        for step in &report.steps {
            assert_eq!(step.masked_energy, 0.0, "N={n} d={d}");
            assert!(step.unmasked_energy > 0.0);
            assert_eq!(step.expected_average, expected);
            for &avg in &step.box_averages {
                assert_eq!(avg, expected, "N={n} d={d}");
            }
            assert!(step.all_phase1, "N={n} d={d}");
        }
    }
    pass("5 (counterexample exactness)", "N=2 d=2 and N=3 d=1: energies 0, averages exact".into());
}

/// 6. coarse-grain scaling on a half-space schedule at delta = 0.5: mixed
///    count slope within +-0.25 of 1-d, mixed measure decreasing and below
///    C eta, k1 perimeter bounded by 4x the flat interface area.
#[test]
fn criterion_06_coarse_grain_scaling() {
    // an irrational direction keeps cube cut fractions equidistributed
    let theta = 0.7f64;
    let nu = vec![theta.cos(), theta.sin()];
    let offset = 0.237;
    let steps: Vec<(f64, f64)> = (7..=12).map(|k| {
        let eps = (2.0f64).powi(-k);
        (eps, eps.sqrt())
    }).collect();
    let sched = Schedule::explicit(steps, 2.0, "eta = sqrt(eps)").unwrap();
    let opts = HalfspaceOptions { offset, compute_energy: false, ..Default::default() };
    let report = halfspace_experiment(&ball(2), &nu, &sched, &opts).unwrap();

    let xs: Vec<f64> = report.steps.iter().map(|s| s.eta.ln()).collect();
    let ys: Vec<f64> = report.steps.iter().map(|s| (s.mixed_count as f64).ln()).collect();
    let slope = lsq_slope(&xs, &ys);
    assert!((slope - (-1.0)).abs() <= 0.25, "slope {slope}");

    let c = report.steps[0].mixed_measure / report.steps[0].eta;
    for w in report.steps.windows(2) {
        assert!(w[1].mixed_measure < w[0].mixed_measure, "mixed measure not decreasing");
    }
    for s in &report.steps {
        assert!(s.mixed_measure <= c * s.eta * (1.0 + 1e-12), "measure bound at eta {}", s.eta);
    }

    // flat interface: chord of {<x,nu> = offset} in the 2x2 window
    let chord = {
        let half = 1.0;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (px, py, dx, dy) in [
            (-half, -half, 1.0, 0.0),
            (-half, half, 1.0, 0.0),
            (-half, -half, 0.0, 1.0),
            (half, -half, 0.0, 1.0),
        ] {
            let denom = dx * nu[0] + dy * nu[1];
            let t = (offset - px * nu[0] - py * nu[1]) / denom;
            if (0.0..=2.0 * half).contains(&t) {
                pts.push((px + t * dx, py + t * dy));
            }
        }
        ((pts[0].0 - pts[1].0).powi(2) + (pts[0].1 - pts[1].1).powi(2)).sqrt()
    };
    let tail = &report.steps[report.steps.len() - 2..];
    for s in tail {
        assert!(
            s.k1_perimeter <= 4.0 * chord,
            "k1 perimeter {} vs 4x interface {}",
            s.k1_perimeter,
            4.0 * chord
        );
    }
    pass(
        "6 (coarse-grain scaling)",
        format!(
            "slope = {slope:.3} (target -1), k1 = {:.2},{:.2} <= {:.2}",
            tail[0].k1_perimeter,
            tail[1].k1_perimeter,
            4.0 * chord
        ),
    );
}

/// 7. delta monotonicity, cube by cube, on 20 seeded random fields.
#[test]
fn criterion_07_delta_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut cubes_checked = 0usize;
    for _ in 0..20 {
        let density = rng.gen_range(0.3..0.9);
        let vals: Vec<u8> =
            (0..32 * 32).map(|_| if rng.gen::<f64>() < density { 1 } else { 0 }).collect();
        let f = SpinField::from_values(
            PeriodicLattice::cubic(2),
            0.125,
            &[32, 32],
            &vec![AxisBound::Restricted; 2],
            vals,
        )
        .unwrap();
        let (d1, _) = CoarseGrainParams::new(0.125, 2.0, 0.3).unwrap();
        let (d2, _) = CoarseGrainParams::new(0.125, 2.0, 0.7).unwrap();
        let r1 = classify(&f, &d1).unwrap();
        let r2 = classify(&f, &d2).unwrap();
        for (a, b) in r1.labels.iter().zip(&r2.labels) {
            if *b == CubeLabel::Mixed {
                assert_eq!(*a, CubeLabel::Mixed, "Mixed(d2) not within Mixed(d1)");
            }
            if *a == CubeLabel::Phase1 {
                assert_eq!(*b, CubeLabel::Phase1, "Phase1(d1) not within Phase1(d2)");
            }
            cubes_checked += 1;
        }
    }
    pass("7 (delta monotonicity)", format!("20 fields, {cubes_checked} cube pairs"));
}

/// 8. polytope recovery: unit square within 3% of 16/3 at the final step;
///    interval [0, 1] within 2% of 2.
#[test]
fn criterion_08_polytope_recovery() {
    let square = TargetSet::Polytope(vec![
        HalfSpaceCut { normal: vec![-1.0, 0.0], offset: 0.0 },
        HalfSpaceCut { normal: vec![1.0, 0.0], offset: 1.0 },
        HalfSpaceCut { normal: vec![0.0, -1.0], offset: 0.0 },
        HalfSpaceCut { normal: vec![0.0, 1.0], offset: 1.0 },
    ]);
    let sched = Schedule::sqrt_rule(1.0 / 256.0, 3, 0.25, 1.3).unwrap();
    let report = polytope_experiment(&ball(2), &square, &sched).unwrap();
    assert!((report.target - 16.0 / 3.0).abs() < 1e-12);
    let last = report.steps.last().unwrap();
    let rel2 = last.rel_error.unwrap();
    assert!(rel2 <= 0.03, "square rel error {rel2}");

    let interval = TargetSet::Polytope(vec![
        HalfSpaceCut { normal: vec![-1.0], offset: 0.0 },
        HalfSpaceCut { normal: vec![1.0], offset: 1.0 },
    ]);
    let sched1 = Schedule::explicit(vec![(0.0001, 0.01)], 1.2, "single").unwrap();
    let report1 = polytope_experiment(&ball(1), &interval, &sched1).unwrap();
    assert_eq!(report1.target, 2.0);
    let rel1 = report1.steps[0].rel_error.unwrap();
    assert!(rel1 <= 0.02, "interval rel error {rel1}");
    pass(
        "8 (polytope recovery)",
        format!(
            "square: {:.5} vs 16/3 ({:.3}%), interval: {:.5} vs 2 ({:.3}%)",
            last.energy.unwrap(),
            rel2 * 100.0,
            report1.steps[0].energy.unwrap(),
            rel1 * 100.0
        ),
    );
}

/// 9. line-jump lower bound never exceeds the measured energy on any
///    half-space step.
#[test]
fn criterion_09_line_jump_lower_bound() {
    let sched = Schedule::sqrt_rule(1.0 / 64.0, 4, 0.5, 1.0).unwrap();
    let opts = HalfspaceOptions { jump_bound: true, ..Default::default() };
    let report = halfspace_experiment(&ball(2), &[1.0, 0.0], &sched, &opts).unwrap();
    for s in &report.steps {
        let bound = s.jump_bound.unwrap();
        let energy = s.energy.unwrap();
        assert!(bound > 0.0);
        assert!(
            bound <= energy * (1.0 + 1e-12),
            "eta {}: jump bound {bound} exceeds energy {energy}",
            s.eta
        );
    }
    pass(
        "9 (line-jump lower bound)",
        format!("{} steps, bound/energy up to {:.4}", report.steps.len(), {
            report
                .steps
                .iter()
                .map(|s| s.jump_bound.unwrap() / s.energy.unwrap())
                .fold(f64::MIN, f64::max)
        }),
    );
}

/// 10. determinism: identical config and seed give byte-identical CSVs.
#[test]
fn criterion_10_determinism() {
    let bin = env!("CARGO_BIN_EXE_latgamma");
    let base = std::env::temp_dir().join(format!("latgamma-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let cfg_path = base.join("run.cfg");
    std::fs::write(
        &cfg_path,
        "\
[kernel]\nkind = ball\nradius = 1.0\ndim = 2\n\
[target]\nnu = 1,0\nn = 2\n\
[schedule]\neps0 = 0.00390625\nsteps = 2\nfactor = 0.5\nwindow = 0.5\n\
[coarsegrain]\ndelta = 0.5\n\
[run]\nseed = 7\n",
    )
    .unwrap();
    let run = |sub: &str, out: &str, extra: &[&str]| {
        let mut cmd = std::process::Command::new(bin);
        cmd.arg(sub)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(base.join(out))
            .args(extra);
        let status = cmd.status().unwrap();
        assert!(status.success(), "{sub} run failed");
    };
    for (sub, file, extra) in [
        ("halfspace", "halfspace.csv", &[][..]),
        ("counterexample", "counterexample.csv", &["--N", "2"][..]),
        ("phi", "phi.csv", &[][..]),
    ] {
        run(sub, "a", extra);
        run(sub, "b", extra);
        let a = std::fs::read(base.join("a").join(file)).unwrap();
        let b = std::fs::read(base.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{sub}: outputs differ between identical runs");
        assert!(!a.is_empty());
    }
    std::fs::remove_dir_all(&base).ok();
    pass("10 (determinism)", "halfspace, counterexample and phi CSVs byte-identical".into());
}
