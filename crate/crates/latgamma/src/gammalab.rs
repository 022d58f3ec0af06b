//! Experiment drivers: half-space and polytope convergence toward the
//! surface tension, lattice Riemann sums, and the perforated-coefficient
//! counterexample.
//!
//! Half-space runs sample `{<x, nu> < c}` on a strip that is periodic along
//! the interface and restricted across it. For rational directions the
//! tangential wrap carries a twist (crossing the wrap axis shifts the normal
//! coordinate) chosen so the sampled half-space is exactly invariant under
//! the identification; the strip then has no wall interfaces and the
//! normalized energy equals the lattice Riemann sum of the kernel at spacing
//! `eps/eta`, which converges to `phi(nu)`.

use crate::coarsegrain::{classify, CoarseGrainParams, CoarseGrainResult};
use crate::energy::{
    energy_direct, energy_fft, line_jump_lower_bound, shift_set, CoefficientMask, EnergyParams,
};
use crate::error::{Error, Result};
use crate::field::{AxisBound, BoxRegion, SpinField, TargetSet};
use crate::kernel::{Kernel, KernelProfile, QuadratureSpec};
use crate::lattice::PeriodicLattice;
use crate::util::{fmt_g17, lsq_slope, norm, pairwise_sum};
use serde::Serialize;

// ---------------------------------------------------------------------------
// schedules and reports
// ---------------------------------------------------------------------------

/// A list of (eps, eta) pairs with the window side in physical units.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub steps: Vec<(f64, f64)>,
    pub rule: String,
    pub window: f64,
}

impl Schedule {
    /// `eta = sqrt(eps)` with `eps` shrinking by `factor` each step.
    pub fn sqrt_rule(eps0: f64, n_steps: usize, factor: f64, window: f64) -> Result<Schedule> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::InvalidSchedule(format!("factor must be in (0,1), got {factor}")));
        }
        let steps = (0..n_steps)
            .map(|k| {
                let eps = eps0 * factor.powi(k as i32);
                (eps, eps.sqrt())
            })
            .collect();
        Schedule::explicit(steps, window, "eta = sqrt(eps)")
    }

    pub fn explicit(steps: Vec<(f64, f64)>, window: f64, rule: &str) -> Result<Schedule> {
        if steps.is_empty() {
            return Err(Error::InvalidSchedule("schedule needs at least one step".into()));
        }
        if !(window > 0.0) {
            return Err(Error::InvalidSchedule(format!("window must be positive, got {window}")));
        }
        for &(eps, eta) in &steps {
            if !(eps > 0.0 && eta > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "eps, eta must be positive, got ({eps}, {eta})"
                )));
            }
        }
        for w in steps.windows(2) {
            let ((e0, h0), (e1, h1)) = (w[0], w[1]);
            if !(e1 < e0) {
                return Err(Error::InvalidSchedule("eps must be strictly decreasing".into()));
            }
            if !(h1 < h0) {
                return Err(Error::InvalidSchedule("eta must decrease along the schedule".into()));
            }
            if !(e1 / h1 < e0 / h0) {
                return Err(Error::InvalidSchedule("eps/eta must decrease along the schedule".into()));
            }
        }
        Ok(Schedule { steps, rule: rule.to_string(), window })
    }
}

/// One convergence-experiment step. Energy fields are None when the run was
/// diagnostics-only.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub eps: f64,
    pub eta: f64,
    pub energy: Option<f64>,
    pub normalized: Option<f64>,
    pub target: f64,
    pub rel_error: Option<f64>,
    pub mixed_count: usize,
    pub mixed_measure: f64,
    pub k1_perimeter: f64,
    pub jump_bound: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub rule: String,
    pub window: f64,
    pub target: f64,
    pub target_provenance: String,
    pub steps: Vec<StepRecord>,
    pub fitted_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    /// One row per step; '.' decimals, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "eps,eta,energy,normalized,target,rel_error,mixed_count,mixed_measure,k1_perimeter\n",
        );
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), fmt_g17);
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt_g17(s.eps),
                fmt_g17(s.eta),
                opt(s.energy),
                opt(s.normalized),
                fmt_g17(s.target),
                opt(s.rel_error),
                s.mixed_count,
                fmt_g17(s.mixed_measure),
                fmt_g17(s.k1_perimeter),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Least-squares slope of `log |rel_error|` against `log (eps/eta)` over the
/// steps with positive finite error.
pub fn fit_rate(report: &ConvergenceReport) -> Result<f64> {
    let pts: Vec<(f64, f64)> = report
        .steps
        .iter()
        .filter_map(|s| {
            let e = s.rel_error?;
            (e.is_finite() && e > 0.0).then_some((s.eps / s.eta, e))
        })
        .collect();
    fit_rate_points(&pts)
}

/// Slope of `log err` vs `log h` for raw (h, err) pairs.
pub fn fit_rate_points(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::NotEnoughPoints { needed: 3, got: points.len() });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(lsq_slope(&xs, &ys))
}

// ---------------------------------------------------------------------------
// Riemann sums and targets
// ---------------------------------------------------------------------------

/// Lattice Riemann sum `sum_xi h^d a(h xi) |<h xi, nu>|` over integer shifts
/// within the kernel support; converges to `phi(nu)` as `h -> 0`.
pub fn riemann_phi(kernel: &Kernel, nu: &[f64], h: f64) -> Result<f64> {
    let d = kernel.dim();
    if nu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: nu.len() });
    }
    let n = norm(nu);
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitDirection { norm: n });
    }
    if !(h > 0.0 && h <= kernel.support_radius()) {
        return Err(Error::Precondition(format!(
            "spacing h must satisfy 0 < h <= support ({})",
            kernel.support_radius()
        )));
    }
    let shifts = shift_set(d, kernel.support_radius() / h);
    let hd = h.powi(d as i32);
    let terms: Vec<f64> = shifts
        .iter()
        .map(|xi| {
            let mut n2 = 0.0;
            let mut ip = 0.0;
            for a in 0..d {
                let s = h * xi[a] as f64;
                n2 += s * s;
                ip += s * nu[a];
            }
            hd * kernel.eval_radial(n2.sqrt()) * ip.abs()
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// The surface-tension target for a direction, preferring the closed form
/// where one exists. Returns (value, provenance).
pub fn phi_target(kernel: &Kernel, nu: &[f64]) -> Result<(f64, &'static str)> {
    if let KernelProfile::BallIndicator { radius } = kernel.profile() {
        let d = kernel.dim();
        let unit = match d {
            1 => 1.0,
            2 => 4.0 / 3.0,
            3 => std::f64::consts::FRAC_PI_2,
            _ => unreachable!(),
        };
        let v = kernel.scale_factor() * radius.powi(d as i32 + 1) * unit;
        return Ok((v, "closed-form"));
    }
    let q = QuadratureSpec::default_for(kernel);
    Ok((kernel.phi(nu, &q)?, "quadrature"))
}

// ---------------------------------------------------------------------------
// half-space experiments
// ---------------------------------------------------------------------------

/// Small integer direction vector parallel to `nu`, if one exists with
/// denominator at most `max_den`.
pub fn rationalize_direction(nu: &[f64], max_den: i64) -> Option<Vec<i64>> {
    let amax = nu.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    if amax == 0.0 {
        return None;
    }
    for q in 1..=max_den {
        let cand: Vec<i64> = nu.iter().map(|&c| (c / amax * q as f64).round() as i64).collect();
        if cand.iter().all(|&c| c == 0) {
            continue;
        }
        let nn = (cand.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
        if cand.iter().zip(nu).all(|(&c, &v)| (c as f64 / nn - v).abs() <= 1e-9) {
            let g = cand.iter().fold(0i64, |g, &c| gcd(g, c.abs()));
            return Some(cand.iter().map(|&c| c / g).collect());
        }
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

struct StripGeometry {
    extents: Vec<usize>,
    boundary: Vec<AxisBound>,
    /// unit normal actually sampled (re-derived from the integer director
    /// when twisting, so the sampled set is exactly wrap-invariant)
    nu: Vec<f64>,
    /// (d-1)-measure of the interface per fundamental domain
    interface_measure: f64,
    /// whether the fft path applies (no twist)
    fft_ok: bool,
    warnings: Vec<String>,
}

fn strip_geometry(
    dim: usize,
    nu: &[f64],
    offset: f64,
    eps: f64,
    eta: f64,
    support: f64,
    window: f64,
) -> Result<StripGeometry> {
    let range = (eta / eps * support).ceil() as i64 + 2;
    let base_cells = (window / eps).round().max(1.0) as i64;
    let director = rationalize_direction(nu, 64);
    let mut warnings = Vec::new();

    // normal axis: largest direction component
    let normal_axis = (0..dim)
        .max_by(|&a, &b| nu[a].abs().partial_cmp(&nu[b].abs()).unwrap())
        .unwrap();

    let axis_aligned = director
        .as_ref()
        .is_some_and(|n| n.iter().enumerate().all(|(a, &c)| c == 0 || a == normal_axis));

    if axis_aligned {
        let n = director.unwrap();
        let mut boundary = vec![AxisBound::periodic(dim); dim];
        boundary[normal_axis] = AxisBound::Restricted;
        let mut extents = vec![base_cells as usize; dim];
        let halfspan = (offset.abs() / eps).ceil() as i64 + range + 2;
        extents[normal_axis] = (base_cells.max(2 * halfspan)) as usize;
        let mut exact_nu = vec![0.0; dim];
        exact_nu[normal_axis] = if n[normal_axis] > 0 { 1.0 } else { -1.0 };
        let tangential: f64 =
            (0..dim).filter(|&a| a != normal_axis).map(|_| base_cells as f64 * eps).product();
        return Ok(StripGeometry {
            extents,
            boundary,
            nu: exact_nu,
            interface_measure: if dim == 1 { 1.0 } else { tangential },
            fft_ok: true,
            warnings,
        });
    }

    if dim == 2 {
        if let Some(n) = director {
            // tangentially periodic with a twist: the identification vector
            // T = twist + W e_wrap satisfies <T, n> = 0
            let wrap_axis = 1 - normal_axis;
            let g = gcd(n[normal_axis].abs(), n[wrap_axis].abs());
            let lcm_unit = (n[normal_axis].abs() / g).max(1);
            let w = (base_cells + lcm_unit - 1) / lcm_unit * lcm_unit;
            let t_norm = -w * n[wrap_axis] / n[normal_axis];
            let mut twist = vec![0i64; dim];
            twist[normal_axis] = t_norm;
            let mut boundary = vec![AxisBound::Restricted; dim];
            boundary[wrap_axis] = AxisBound::Periodic { twist };
            // normal extent covers the interface span plus the interaction
            // range plus the twist overhang
            let nn = (n.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
            let slope = (n[wrap_axis] as f64 / n[normal_axis] as f64).abs();
            let halfspan = (w as f64 / 2.0 * slope
                + offset.abs() * nn / (eps * n[normal_axis].abs() as f64))
                .ceil() as i64
                + range
                + 2;
            let mut extents = vec![0usize; dim];
            extents[wrap_axis] = w as usize;
            extents[normal_axis] = (base_cells.max(2 * halfspan)) as usize;
            let exact_nu: Vec<f64> = n.iter().map(|&c| c as f64 / nn).collect();
            let t_len = ((t_norm * t_norm + w * w) as f64).sqrt();
            return Ok(StripGeometry {
                extents,
                boundary,
                nu: exact_nu,
                interface_measure: t_len * eps,
                fft_ok: false,
                warnings,
            });
        }
        // irrational direction: fully restricted window, chord-normalized
        warnings.push(
            "direction has no small integer form; tangential walls are restricted and \
             edge effects of order eta/window remain"
                .to_string(),
        );
        let extents = vec![base_cells as usize; dim];
        let half = base_cells as f64 * eps / 2.0;
        let chord = chord_length_2d(nu, offset, half);
        return Ok(StripGeometry {
            extents,
            boundary: vec![AxisBound::Restricted; dim],
            nu: nu.to_vec(),
            interface_measure: chord,
            fft_ok: true,
            warnings,
        });
    }

    Err(Error::Unsupported(
        "half-space experiments off the coordinate axes are implemented for d <= 2".into(),
    ))
}

/// Length of `{<x, nu> = c}` inside the centered square of half-side `half`.
fn chord_length_2d(nu: &[f64], c: f64, half: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let edges = [
        (-half, -half, 1.0, 0.0),
        (-half, half, 1.0, 0.0),
        (-half, -half, 0.0, 1.0),
        (half, -half, 0.0, 1.0),
    ];
    for (px, py, dx, dy) in edges {
        let denom = dx * nu[0] + dy * nu[1];
        if denom.abs() > 1e-15 {
            let t = (c - px * nu[0] - py * nu[1]) / denom;
            if (0.0..=2.0 * half).contains(&t) {
                pts.push((px + t * dx, py + t * dy));
            }
        }
    }
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    if pts.len() < 2 {
        return 0.0;
    }
    ((pts[0].0 - pts[1].0).powi(2) + (pts[0].1 - pts[1].1).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct HalfspaceOptions {
    pub delta: f64,
    /// interface offset: the sampled set is `{<x, nu> < offset}`
    pub offset: f64,
    /// skip the energy evaluation (coarse diagnostics only)
    pub compute_energy: bool,
    /// also evaluate the line-jump lower bound per step
    pub jump_bound: bool,
}

impl Default for HalfspaceOptions {
    fn default() -> Self {
        HalfspaceOptions { delta: 0.5, offset: 0.0, compute_energy: true, jump_bound: false }
    }
}

/// Sample the half-space on each schedule step, evaluate the scaled energy
/// per unit interface measure and attach coarse-grain diagnostics. The
/// target is `phi(nu)`.
pub fn halfspace_experiment(
    kernel: &Kernel,
    nu: &[f64],
    schedule: &Schedule,
    opts: &HalfspaceOptions,
) -> Result<ConvergenceReport> {
    let d = kernel.dim();
    if nu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: nu.len() });
    }
    let n = norm(nu);
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitDirection { norm: n });
    }
    for &(_, eta) in &schedule.steps {
        if schedule.window < 8.0 * eta {
            return Err(Error::Precondition(format!(
                "window {} is smaller than 8 eta = {}",
                schedule.window,
                8.0 * eta
            )));
        }
    }
    let (target, provenance) = phi_target(kernel, nu)?;
    let mut steps = Vec::with_capacity(schedule.steps.len());
    let mut report_warnings: Vec<String> = Vec::new();
    for &(eps, eta) in &schedule.steps {
        let geo =
            strip_geometry(d, nu, opts.offset, eps, eta, kernel.support_radius(), schedule.window)?;
        let mut warnings = geo.warnings.clone();
        let set = TargetSet::HalfSpace { normal: geo.nu.clone(), offset: opts.offset };

        let (energy, normalized, jump) = if opts.compute_energy {
            let field = SpinField::sample(
                &set,
                PeriodicLattice::cubic(d),
                eps,
                &geo.extents,
                &geo.boundary,
            )?;
            let params = EnergyParams::new(eps, eta, kernel.clone())?;
            let ev = if geo.fft_ok { energy_fft(&field, &params)? } else { energy_direct(&field, &params)? };
            warnings.extend(ev.warnings.clone());
            let jump =
                if opts.jump_bound { Some(line_jump_lower_bound(&field, &params)?) } else { None };
            (Some(ev.value), Some(ev.value / geo.interface_measure), jump)
        } else {
            (None, None, None)
        };

        // coarse diagnostics on the declared window, trimmed to whole cubes
        let (cg_params, cg_warn) = CoarseGrainParams::new(eps, eta, opts.delta)?;
        warnings.extend(cg_warn);
        let diag = classify_halfspace_window(&set, d, eps, schedule.window, &cg_params)?;

        let rel_error = normalized.map(|v| (v - target).abs() / target.abs().max(f64::MIN_POSITIVE));
        steps.push(StepRecord {
            eps,
            eta,
            energy,
            normalized,
            target,
            rel_error,
            mixed_count: diag.mixed_count,
            mixed_measure: diag.mixed_measure,
            k1_perimeter: diag.k1_perimeter,
            jump_bound: jump,
            warnings,
        });
    }
    let mut report = ConvergenceReport {
        label: format!("halfspace nu={nu:?}"),
        rule: schedule.rule.clone(),
        window: schedule.window,
        target,
        target_provenance: provenance.to_string(),
        steps,
        fitted_rate: None,
        warnings: Vec::new(),
    };
    match fit_rate(&report) {
        Ok(rate) => report.fitted_rate = Some(rate),
        Err(e) => report_warnings.push(format!("no fitted rate: {e}")),
    }
    report.warnings = report_warnings;
    Ok(report)
}

fn classify_halfspace_window(
    set: &TargetSet,
    dim: usize,
    eps: f64,
    window: f64,
    params: &CoarseGrainParams,
) -> Result<CoarseGrainResult> {
    let m = params.cube_side;
    let cells = ((window / eps).round() as usize).max(m);
    let trimmed = ((cells / m) * m).max(m);
    let extents = vec![trimmed; dim];
    let field = SpinField::sample(
        set,
        PeriodicLattice::cubic(dim),
        eps,
        &extents,
        &vec![AxisBound::Restricted; dim],
    )?;
    classify(&field, params)
}

// ---------------------------------------------------------------------------
// polytope experiments
// ---------------------------------------------------------------------------

struct FaceDecomposition {
    /// (area, outward unit normal)
    faces: Vec<(f64, Vec<f64>)>,
    bbox: Option<(Vec<f64>, Vec<f64>)>,
}

fn decompose_polytope(dim: usize, cuts: &[crate::field::HalfSpaceCut]) -> Result<FaceDecomposition> {
    match dim {
        1 => {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for c in cuts {
                let n = c.normal[0];
                if n > 0.0 {
                    hi = hi.min(c.offset / n);
                } else if n < 0.0 {
                    lo = lo.max(c.offset / n);
                }
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidField("polytope is unbounded".into()));
            }
            if lo >= hi {
                // empty interior: nothing to sample, zero target
                return Ok(FaceDecomposition { faces: Vec::new(), bbox: None });
            }
            Ok(FaceDecomposition {
                faces: vec![(1.0, vec![-1.0]), (1.0, vec![1.0])],
                bbox: Some((vec![lo], vec![hi])),
            })
        }
        2 => {
            const BIG: f64 = 1e6;
            let mut poly: Vec<(f64, f64)> = vec![(-BIG, -BIG), (BIG, -BIG), (BIG, BIG), (-BIG, BIG)];
            for c in cuts {
                poly = clip_polygon(&poly, &c.normal, c.offset);
                if poly.is_empty() {
                    return Ok(FaceDecomposition { faces: Vec::new(), bbox: None });
                }
            }
            if poly.iter().any(|&(x, y)| x.abs() >= BIG * 0.99 || y.abs() >= BIG * 0.99) {
                return Err(Error::InvalidField("polytope is unbounded".into()));
            }
            let mut clean: Vec<(f64, f64)> = Vec::new();
            for &v in &poly {
                if clean
                    .last()
                    .map_or(true, |&l| (l.0 - v.0).abs() > 1e-12 || (l.1 - v.1).abs() > 1e-12)
                {
                    clean.push(v);
                }
            }
            if clean.len() >= 2 {
                let (f, l) = (clean[0], *clean.last().unwrap());
                if (f.0 - l.0).abs() <= 1e-12 && (f.1 - l.1).abs() <= 1e-12 {
                    clean.pop();
                }
            }
            if clean.len() < 3 {
                return Ok(FaceDecomposition { faces: Vec::new(), bbox: None });
            }
            // counter-clockwise orientation so edge normals point outward
            let area2: f64 = (0..clean.len())
                .map(|i| {
                    let a = clean[i];
                    let b = clean[(i + 1) % clean.len()];
                    a.0 * b.1 - b.0 * a.1
                })
                .sum();
            if area2 < 0.0 {
                clean.reverse();
            }
            let mut faces = Vec::new();
            for i in 0..clean.len() {
                let a = clean[i];
                let b = clean[(i + 1) % clean.len()];
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len = (dx * dx + dy * dy).sqrt();
                if len > 1e-12 {
                    faces.push((len, vec![dy / len, -dx / len]));
                }
            }
            let lo = vec![
                clean.iter().map(|v| v.0).fold(f64::INFINITY, f64::min),
                clean.iter().map(|v| v.1).fold(f64::INFINITY, f64::min),
            ];
            let hi = vec![
                clean.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max),
                clean.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max),
            ];
            Ok(FaceDecomposition { faces, bbox: Some((lo, hi)) })
        }
        _ => Err(Error::Unsupported("polytope face decomposition is implemented for d <= 2".into())),
    }
}

/// Sutherland-Hodgman clip against `<x, n> <= c`.
fn clip_polygon(poly: &[(f64, f64)], n: &[f64], c: f64) -> Vec<(f64, f64)> {
    let inside = |p: (f64, f64)| p.0 * n[0] + p.1 * n[1] <= c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ia, ib) = (inside(a), inside(b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let da = a.0 * n[0] + a.1 * n[1] - c;
            let db = b.0 * n[0] + b.1 * n[1] - c;
            let t = da / (da - db);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

/// Total (unnormalized) energy of the sampled polytope against the
/// face-decomposed target `sum_faces area * phi(face normal)`.
pub fn polytope_experiment(
    kernel: &Kernel,
    set: &TargetSet,
    schedule: &Schedule,
) -> Result<ConvergenceReport> {
    let d = kernel.dim();
    let TargetSet::Polytope(cuts) = set else {
        return Err(Error::Precondition("polytope_experiment expects a polytope target".into()));
    };
    set.validate(d)?;
    let decomp = decompose_polytope(d, cuts)?;
    let mut target = 0.0;
    let mut provenance = "face-decomposition (closed-form)";
    for (area, nrm) in &decomp.faces {
        let (phi, prov) = phi_target(kernel, nrm)?;
        if prov != "closed-form" {
            provenance = "face-decomposition (quadrature)";
        }
        target += area * phi;
    }
    let support = kernel.support_radius();

    // recentre the target so the centered window needs no origin shift
    let (sample_set, bbox_size) = match &decomp.bbox {
        Some((lo, hi)) => {
            let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
            let t: Vec<f64> = center.iter().map(|c| -c).collect();
            (set.translated(&t)?, lo.iter().zip(hi).map(|(l, h)| h - l).collect::<Vec<f64>>())
        }
        None => (set.clone(), vec![0.0; d]),
    };

    let mut steps = Vec::with_capacity(schedule.steps.len());
    let mut report_warnings = Vec::new();
    for &(eps, eta) in &schedule.steps {
        // compact containment: margin of eta + support*eta on every side
        let margin = eta * (1.0 + support);
        for a in 0..d {
            if bbox_size[a] + 2.0 * margin > schedule.window {
                return Err(Error::MarginViolation(format!(
                    "axis {a}: target extent {} plus margins {} exceeds window {}",
                    bbox_size[a],
                    2.0 * margin,
                    schedule.window
                )));
            }
        }
        let cells = ((schedule.window / eps).round() as usize).max(2);
        let extents = vec![cells; d];
        let boundary = vec![AxisBound::periodic(d); d];
        let field =
            SpinField::sample(&sample_set, PeriodicLattice::cubic(d), eps, &extents, &boundary)?;
        let params = EnergyParams::new(eps, eta, kernel.clone())?;
        let ev = energy_fft(&field, &params)?;
        let mut warnings = ev.warnings.clone();

        let (cg_params, cg_warn) = CoarseGrainParams::new(eps, eta, 0.5)?;
        warnings.extend(cg_warn);
        let m = cg_params.cube_side;
        let trimmed = ((cells / m) * m).max(m);
        let diag_field = SpinField::sample(
            &sample_set,
            PeriodicLattice::cubic(d),
            eps,
            &vec![trimmed; d],
            &vec![AxisBound::Restricted; d],
        )?;
        let diag = classify(&diag_field, &cg_params)?;

        let rel_error = if target.abs() > 0.0 {
            (ev.value - target).abs() / target.abs()
        } else {
            ev.value.abs()
        };
        steps.push(StepRecord {
            eps,
            eta,
            energy: Some(ev.value),
            normalized: Some(ev.value),
            target,
            rel_error: Some(rel_error),
            mixed_count: diag.mixed_count,
            mixed_measure: diag.mixed_measure,
            k1_perimeter: diag.k1_perimeter,
            jump_bound: None,
            warnings,
        });
    }
    let mut report = ConvergenceReport {
        label: "polytope".to_string(),
        rule: schedule.rule.clone(),
        window: schedule.window,
        target,
        target_provenance: provenance.to_string(),
        steps,
        fitted_rate: None,
        warnings: Vec::new(),
    };
    match fit_rate(&report) {
        Ok(rate) => report.fitted_rate = Some(rate),
        Err(e) => report_warnings.push(format!("no fitted rate: {e}")),
    }
    report.warnings = report_warnings;
    Ok(report)
}

// ---------------------------------------------------------------------------
// perforation counterexample
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleStep {
    pub eps: f64,
    pub eta: f64,
    pub masked_energy: f64,
    pub unmasked_energy: f64,
    pub box_averages: Vec<f64>,
    pub expected_average: f64,
    pub all_phase1: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub n: u32,
    pub dim: usize,
    pub delta: f64,
    pub steps: Vec<CounterexampleStep>,
}

impl CounterexampleReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "eps,eta,masked_energy,unmasked_energy,avg_min,avg_max,expected_average,all_phase1\n",
        );
        for s in &self.steps {
            let mn = s.box_averages.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = s.box_averages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_g17(s.eps),
                fmt_g17(s.eta),
                fmt_g17(s.masked_energy),
                fmt_g17(s.unmasked_energy),
                fmt_g17(mn),
                fmt_g17(mx),
                fmt_g17(s.expected_average),
                s.all_phase1,
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The perforated-coefficient configuration: value 0 on `N Z^d`, coefficients
/// zeroed on pairs touching that sublattice. The masked energy vanishes
/// identically while the fields converge weakly to the constant `1 - 1/N^d`,
/// and for `delta` with `1 - delta < 1 - 2/N^d` every cube is classified as
/// phase 1 -- zero energy with a non-characteristic weak limit.
pub fn perforation_counterexample(
    n: u32,
    dim: usize,
    schedule: &Schedule,
) -> Result<CounterexampleReport> {
    if n < 2 {
        return Err(Error::Precondition(format!("perforation N must be >= 2, got {n}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::Precondition(format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    let nd = (n as f64).powi(dim as i32);
    let expected = (nd - 1.0) / nd;
    let delta = 0.5 * (1.0 + 2.0 / nd);
    let kernel = Kernel::ball(dim, 1.0)?;
    let set = TargetSet::PerforatedConstant { n };
    let mut steps = Vec::with_capacity(schedule.steps.len());
    for &(eps, eta) in &schedule.steps {
        // window cells: a multiple of 4N so the quadrant boxes hold whole
        // perforation periods
        let unit = 4 * n as i64;
        let base = (schedule.window / eps).round() as i64;
        let cells = ((base + unit - 1) / unit * unit).max(unit) as usize;
        let extents = vec![cells; dim];
        let boundary = vec![AxisBound::periodic(dim); dim];
        let field = SpinField::sample(&set, PeriodicLattice::cubic(dim), eps, &extents, &boundary)?;

        let base_params = EnergyParams::new(eps, eta, kernel.clone())?;
        let masked_params = base_params.clone().with_mask(CoefficientMask::Perforation { n });
        let masked_energy = energy_direct(&field, &masked_params)?.value;
        let unmasked = energy_fft(&field, &base_params)?;
        let mut warnings = unmasked.warnings.clone();

        // window averages over the 2^d quadrant boxes
        let mut box_averages = Vec::with_capacity(1 << dim);
        let region = field.window_region();
        for q in 0..(1usize << dim) {
            let mut lo = vec![0.0; dim];
            let mut hi = vec![0.0; dim];
            for a in 0..dim {
                let mid = 0.5 * (region.lo[a] + region.hi[a]);
                if q & (1 << a) == 0 {
                    lo[a] = region.lo[a];
                    hi[a] = mid;
                } else {
                    lo[a] = mid;
                    hi[a] = region.hi[a];
                }
            }
            box_averages.push(field.window_average(&BoxRegion::new(lo, hi))?);
        }

        // coarse cubes aligned to the perforation period
        let (cg, cg_warn) = CoarseGrainParams::new(eps, eta, delta)?;
        warnings.extend(cg_warn);
        let aligned = ((cg.cube_side as f64 / n as f64).round() as usize).max(1) * n as usize;
        let cg = cg.with_cube_side(aligned)?;
        let diag = classify(&field, &cg)?;
        let all_phase1 = diag.phase1_count == diag.labels.len();

        steps.push(CounterexampleStep {
            eps,
            eta,
            masked_energy,
            unmasked_energy: unmasked.value,
            box_averages,
            expected_average: expected,
            all_phase1,
            warnings,
        });
    }
    Ok(CounterexampleReport { n, dim, delta, steps })
}
