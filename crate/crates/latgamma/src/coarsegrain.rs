//! Coarse-graining: cube partition at side `eta/(4 eps)`, the majority
//! statistic, phase/mixed classification and boundary-measure diagnostics.
//!
//! Cubes are anchored at the window origin and hold `side^d` cells each;
//! partial cubes at the window edge are excluded from classification and
//! reported. A cube with majority statistic `D >= 1 - delta` carries its
//! majority phase; the rest are mixed. Exact ties have `D = 0` and are mixed
//! for every `delta < 1`.

use crate::error::{Error, Result};
use crate::field::{AxisBound, SpinField};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct CoarseGrainParams {
    pub delta: f64,
    /// Cube side in sites.
    pub cube_side: usize,
    pub eps: f64,
    pub eta: f64,
}

impl CoarseGrainParams {
    /// Cube side `round(eta / (4 eps))`, clamped to one site. Returns the
    /// params plus warnings about rounding distortion.
    pub fn new(eps: f64, eta: f64, delta: f64) -> Result<(CoarseGrainParams, Vec<String>)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Precondition(format!("delta must lie strictly in (0,1), got {delta}")));
        }
        if !(eps > 0.0) || !(eta > 0.0) {
            return Err(Error::Precondition("eps and eta must be positive".into()));
        }
        let ideal = eta / (4.0 * eps);
        let cube_side = (ideal.round() as usize).max(1);
        let mut warnings = Vec::new();
        let rel = (cube_side as f64 - ideal).abs() / ideal;
        if rel > 0.25 {
            warnings.push(format!(
                "cube side rounded from {ideal:.3} to {cube_side} sites ({:.0}% off)",
                rel * 100.0
            ));
        }
        Ok((CoarseGrainParams { delta, cube_side, eps, eta }, warnings))
    }

    /// Override the cube side (e.g. to align cubes with a perforation
    /// period).
    pub fn with_cube_side(mut self, side: usize) -> Result<CoarseGrainParams> {
        if side == 0 {
            return Err(Error::Precondition("cube side must be at least one site".into()));
        }
        self.cube_side = side;
        Ok(self)
    }

    pub fn cube_physical(&self) -> f64 {
        self.cube_side as f64 * self.eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CubeLabel {
    Phase1,
    Phase0,
    Mixed,
}

/// Classification output: per-cube labels and D values on the coarse grid,
/// plus the measure and boundary diagnostics.
#[derive(Debug, Clone)]
pub struct CoarseGrainResult {
    pub extents: Vec<usize>,
    pub cube_side: usize,
    pub cube_side_physical: f64,
    pub delta: f64,
    pub labels: Vec<CubeLabel>,
    pub d_values: Vec<f64>,
    pub phase1_count: usize,
    pub phase0_count: usize,
    pub mixed_count: usize,
    /// `|union of mixed cubes| = #mixed * side_phys^d`
    pub mixed_measure: f64,
    /// surface measure of the union of mixed cubes
    pub mixed_boundary: f64,
    pub k1_perimeter: f64,
    pub k0_perimeter: f64,
    /// phase-1 cubes with a phase-0 neighbor in a coordinate direction
    pub phase1_adjacent_phase0: usize,
    pub excluded_partial_cubes: usize,
    pub d_histogram: [u32; 32],
    pub warnings: Vec<String>,
}

fn coarse_wrap_flags(f: &SpinField, side: usize) -> Vec<bool> {
    // the coarse grid wraps only where the fine grid wraps without twist and
    // the cube side divides the extent evenly
    (0..f.dim())
        .map(|a| match &f.boundary()[a] {
            AxisBound::Periodic { twist } => {
                twist.iter().all(|&t| t == 0) && f.extents()[a] % side == 0
            }
            AxisBound::Restricted => false,
        })
        .collect()
}

fn cube_site_counts(f: &SpinField, p: &CoarseGrainParams, cube: &[i64]) -> (u64, u64) {
    let d = f.dim();
    let side = p.cube_side as i64;
    let n_off = f.lattice().n_offsets();
    let mut ones = 0u64;
    let mut total = 0u64;
    let mut rel = vec![0usize; d];
    let base: Vec<i64> = (0..d).map(|a| cube[a] * side).collect();
    loop {
        let mut idx = 0usize;
        for a in 0..d {
            idx = idx * f.extents()[a] + (base[a] as usize + rel[a]);
        }
        idx *= n_off;
        for oi in 0..n_off {
            ones += f.values()[idx + oi] as u64;
            total += 1;
        }
        let mut a = d;
        let advanced = loop {
            if a == 0 {
                break false;
            }
            a -= 1;
            rel[a] += 1;
            if rel[a] < side as usize {
                break true;
            }
            rel[a] = 0;
        };
        if !advanced {
            break;
        }
    }
    (ones, total)
}

/// `D = |#ones - #zeros| / #sites` over the cube with the given coarse grid
/// index (0-based from the window origin). Counts are unweighted site counts
/// on any lattice.
pub fn majority_statistic(f: &SpinField, cube: &[i64], p: &CoarseGrainParams) -> Result<f64> {
    let d = f.dim();
    if cube.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: cube.len() });
    }
    for a in 0..d {
        let n_cubes = f.extents()[a] / p.cube_side;
        if cube[a] < 0 || cube[a] >= n_cubes as i64 {
            return Err(Error::EmptyCube);
        }
    }
    let (ones, total) = cube_site_counts(f, p, cube);
    let zeros = total - ones;
    Ok((ones as i64 - zeros as i64).unsigned_abs() as f64 / total as f64)
}

/// Classify every full cube of the window and assemble diagnostics.
pub fn classify(f: &SpinField, p: &CoarseGrainParams) -> Result<CoarseGrainResult> {
    let d = f.dim();
    if p.eps != f.eps() {
        return Err(Error::Precondition(format!(
            "params eps = {} must match the field eps = {}",
            p.eps,
            f.eps()
        )));
    }
    let side = p.cube_side;
    let extents: Vec<usize> = f.extents().iter().map(|&n| n / side).collect();
    if extents.iter().any(|&n| n == 0) {
        return Err(Error::Precondition(format!(
            "window {:?} holds no full cube of side {side}",
            f.extents()
        )));
    }
    let full: usize = extents.iter().product();
    let incl_partial: usize = f.extents().iter().map(|&n| n.div_ceil(side)).product();
    let excluded_partial_cubes = incl_partial - full;

    let decode = |flat: usize| -> Vec<i64> {
        let mut rem = flat;
        let mut c = vec![0i64; d];
        for a in (0..d).rev() {
            c[a] = (rem % extents[a]) as i64;
            rem /= extents[a];
        }
        c
    };

    let stats: Vec<(CubeLabel, f64)> = (0..full)
        .into_par_iter()
        .map(|flat| {
            let cube = decode(flat);
            let (ones, total) = cube_site_counts(f, p, &cube);
            let zeros = total - ones;
            let dv = (ones as i64 - zeros as i64).unsigned_abs() as f64 / total as f64;
            let label = if dv < 1.0 - p.delta {
                CubeLabel::Mixed
            } else if ones > zeros {
                CubeLabel::Phase1
            } else {
                CubeLabel::Phase0
            };
            (label, dv)
        })
        .collect();

    let labels: Vec<CubeLabel> = stats.iter().map(|s| s.0).collect();
    let d_values: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let phase1_count = labels.iter().filter(|&&l| l == CubeLabel::Phase1).count();
    let phase0_count = labels.iter().filter(|&&l| l == CubeLabel::Phase0).count();
    let mixed_count = full - phase1_count - phase0_count;

    let mut d_histogram = [0u32; 32];
    for &dv in &d_values {
        let bin = ((dv * 32.0) as usize).min(31);
        d_histogram[bin] += 1;
    }

    let side_phys = p.cube_physical();
    let wrap = coarse_wrap_flags(f, side);
    let mask_of =
        |want: CubeLabel| -> Vec<u8> { labels.iter().map(|&l| (l == want) as u8).collect() };
    let mixed_mask = mask_of(CubeLabel::Mixed);
    let k1_mask = mask_of(CubeLabel::Phase1);
    let k0_mask = mask_of(CubeLabel::Phase0);
    let mixed_boundary = boundary_measure(&mixed_mask, &extents, side_phys, &wrap);
    let k1_perimeter = boundary_measure(&k1_mask, &extents, side_phys, &wrap);
    let k0_perimeter = boundary_measure(&k0_mask, &extents, side_phys, &wrap);

    let neighbor = |flat: usize, axis: usize, dir: i64| -> Option<usize> {
        let mut c = decode(flat);
        c[axis] += dir;
        if c[axis] < 0 || c[axis] >= extents[axis] as i64 {
            if wrap[axis] {
                c[axis] = c[axis].rem_euclid(extents[axis] as i64);
            } else {
                return None;
            }
        }
        let mut idx = 0usize;
        for a in 0..d {
            idx = idx * extents[a] + c[a] as usize;
        }
        Some(idx)
    };
    let phase1_adjacent_phase0 = (0..full)
        .filter(|&flat| {
            labels[flat] == CubeLabel::Phase1
                && (0..d).any(|a| {
                    [-1i64, 1].iter().any(|&dir| {
                        neighbor(flat, a, dir)
                            .map(|nb| labels[nb] == CubeLabel::Phase0)
                            .unwrap_or(false)
                    })
                })
        })
        .count();

    Ok(CoarseGrainResult {
        extents,
        cube_side: side,
        cube_side_physical: side_phys,
        delta: p.delta,
        labels,
        d_values,
        phase1_count,
        phase0_count,
        mixed_count,
        mixed_measure: mixed_count as f64 * side_phys.powi(d as i32),
        mixed_boundary,
        k1_perimeter,
        k0_perimeter,
        phase1_adjacent_phase0,
        excluded_partial_cubes,
        d_histogram,
        warnings: Vec::new(),
    })
}

/// Indicator grids of the phase-1 and phase-0 cube unions.
pub fn k_sets(r: &CoarseGrainResult) -> (Vec<u8>, Vec<u8>) {
    let k1 = r.labels.iter().map(|&l| (l == CubeLabel::Phase1) as u8).collect();
    let k0 = r.labels.iter().map(|&l| (l == CubeLabel::Phase0) as u8).collect();
    (k1, k0)
}

/// Surface measure of a union of grid cubes: exposed faces times
/// `side_phys^{d-1}`. A face is exposed when the neighbor cell is outside
/// the set; beyond the grid counts as outside unless the axis wraps.
pub fn boundary_measure(grid: &[u8], extents: &[usize], side_phys: f64, wrap: &[bool]) -> f64 {
    let d = extents.len();
    let total: usize = extents.iter().product();
    assert_eq!(grid.len(), total, "grid length must match extents");
    let mut faces = 0u64;
    let mut coords = vec![0usize; d];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..d).rev() {
            coords[a] = rem % extents[a];
            rem /= extents[a];
        }
        if grid[flat] == 0 {
            continue;
        }
        for a in 0..d {
            for dir in [-1i64, 1] {
                let c = coords[a] as i64 + dir;
                let outside = if c < 0 || c >= extents[a] as i64 {
                    if wrap[a] {
                        let cc = c.rem_euclid(extents[a] as i64) as usize;
                        let mut idx = 0usize;
                        for b in 0..d {
                            idx = idx * extents[b] + if b == a { cc } else { coords[b] };
                        }
                        grid[idx] == 0
                    } else {
                        true
                    }
                } else {
                    let mut idx = 0usize;
                    for b in 0..d {
                        idx = idx * extents[b] + if b == a { c as usize } else { coords[b] };
                    }
                    grid[idx] == 0
                };
                if outside {
                    faces += 1;
                }
            }
        }
    }
    faces as f64 * side_phys.powi(d as i32 - 1)
}

#[derive(Serialize)]
struct CoarseGrainJson<'a> {
    extents: &'a [usize],
    cube_side: usize,
    cube_side_physical: f64,
    delta: f64,
    labels_rle: Vec<(CubeLabel, usize)>,
    d_histogram: &'a [u32],
    phase1_count: usize,
    phase0_count: usize,
    mixed_count: usize,
    mixed_measure: f64,
    mixed_boundary: f64,
    k1_perimeter: f64,
    k0_perimeter: f64,
    phase1_adjacent_phase0: usize,
    excluded_partial_cubes: usize,
    warnings: &'a [String],
}

impl CoarseGrainResult {
    /// Serialize with the label grid run-length encoded.
    pub fn to_json(&self) -> String {
        let mut rle: Vec<(CubeLabel, usize)> = Vec::new();
        for &l in &self.labels {
            match rle.last_mut() {
                Some((prev, n)) if *prev == l => *n += 1,
                _ => rle.push((l, 1)),
            }
        }
        serde_json::to_string_pretty(&CoarseGrainJson {
            extents: &self.extents,
            cube_side: self.cube_side,
            cube_side_physical: self.cube_side_physical,
            delta: self.delta,
            labels_rle: rle,
            d_histogram: &self.d_histogram,
            phase1_count: self.phase1_count,
            phase0_count: self.phase0_count,
            mixed_count: self.mixed_count,
            mixed_measure: self.mixed_measure,
            mixed_boundary: self.mixed_boundary,
            k1_perimeter: self.k1_perimeter,
            k0_perimeter: self.k0_perimeter,
            phase1_adjacent_phase0: self.phase1_adjacent_phase0,
            excluded_partial_cubes: self.excluded_partial_cubes,
            warnings: &self.warnings,
        })
        .expect("coarse-grain result serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TargetSet;
    use crate::lattice::PeriodicLattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn restricted(d: usize) -> Vec<AxisBound> {
        vec![AxisBound::Restricted; d]
    }

    fn params(eps: f64, eta: f64, delta: f64) -> CoarseGrainParams {
        CoarseGrainParams::new(eps, eta, delta).unwrap().0
    }

    #[test]
    fn majority_statistic_examples() {
        // constant cube -> 1
        let f = SpinField::constant(PeriodicLattice::cubic(2), 0.25, &[8, 8], &restricted(2), 1)
            .unwrap();
        let p = params(0.25, 4.0, 0.5); // cube side 4
        assert_eq!(p.cube_side, 4);
        assert_eq!(majority_statistic(&f, &[0, 0], &p).unwrap(), 1.0);

        // perfectly balanced cube -> 0
        let vals: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let g =
            SpinField::from_values(PeriodicLattice::cubic(2), 0.25, &[4, 4], &restricted(2), vals)
                .unwrap();
        assert_eq!(majority_statistic(&g, &[0, 0], &p).unwrap(), 0.0);

        // 3 ones, 1 zero -> 0.5
        let h = SpinField::from_values(
            PeriodicLattice::cubic(2),
            0.25,
            &[2, 2],
            &restricted(2),
            vec![1, 1, 1, 0],
        )
        .unwrap();
        let p2 = params(0.25, 2.0, 0.5); // cube side 2
        assert_eq!(majority_statistic(&h, &[0, 0], &p2).unwrap(), 0.5);

        assert!(matches!(majority_statistic(&h, &[5, 0], &p2), Err(Error::EmptyCube)));
    }

    #[test]
    fn classify_constant_and_checkerboard() {
        let f = SpinField::constant(PeriodicLattice::cubic(2), 0.25, &[8, 8], &restricted(2), 1)
            .unwrap();
        let p = params(0.25, 2.0, 0.5);
        let r = classify(&f, &p).unwrap();
        assert_eq!(r.phase1_count, r.labels.len());
        assert_eq!(r.mixed_count, 0);
        assert_eq!(r.mixed_measure, 0.0);

        // site-scale checkerboard: every cube balanced, all mixed
        let vals: Vec<u8> = (0..64).map(|i| (((i / 8) + i) % 2) as u8).collect();
        let cb =
            SpinField::from_values(PeriodicLattice::cubic(2), 0.25, &[8, 8], &restricted(2), vals)
                .unwrap();
        let r2 = classify(&cb, &p).unwrap();
        assert_eq!(r2.mixed_count, r2.labels.len());
        assert!(r2.d_values.iter().all(|&dv| dv == 0.0));
    }

    #[test]
    fn classify_halfspace() {
        let set = TargetSet::HalfSpace { normal: vec![1.0, 0.0], offset: 0.0 };
        let f =
            SpinField::sample(&set, PeriodicLattice::cubic(2), 0.125, &[16, 16], &restricted(2))
                .unwrap();
        let p = params(0.125, 2.0, 0.5); // cube side 4
        let r = classify(&f, &p).unwrap();
        // interface is cube-aligned here: no mixed cubes, half phase-1
        assert_eq!(r.mixed_count, 0);
        assert_eq!(r.phase1_count, r.phase0_count);
        // per-cube counting oracle
        for flat in 0..r.labels.len() {
            let cube = [(flat / 4) as i64, (flat % 4) as i64];
            let dv = majority_statistic(&f, &cube, &p).unwrap();
            assert_eq!(dv, r.d_values[flat]);
        }

        // shift the interface by half a cube: one mixed layer appears
        let set2 = TargetSet::HalfSpace { normal: vec![1.0, 0.0], offset: 0.125 * 2.0 };
        let g =
            SpinField::sample(&set2, PeriodicLattice::cubic(2), 0.125, &[16, 16], &restricted(2))
                .unwrap();
        let r2 = classify(&g, &p).unwrap();
        assert_eq!(r2.mixed_count, 4);
        assert!((r2.mixed_measure - 4.0 * 0.5f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn k_sets_examples() {
        let f = SpinField::constant(PeriodicLattice::cubic(2), 0.25, &[8, 8], &restricted(2), 1)
            .unwrap();
        let p = params(0.25, 2.0, 0.5);
        let r = classify(&f, &p).unwrap();
        let (k1, k0) = k_sets(&r);
        assert!(k1.iter().all(|&v| v == 1));
        assert!(k0.iter().all(|&v| v == 0));

        // checkerboard: everything mixed, both k-sets empty
        let vals: Vec<u8> = (0..64).map(|i| (((i / 8) + i) % 2) as u8).collect();
        let cb =
            SpinField::from_values(PeriodicLattice::cubic(2), 0.25, &[8, 8], &restricted(2), vals)
                .unwrap();
        let (k1, k0) = k_sets(&classify(&cb, &p).unwrap());
        assert!(k1.iter().all(|&v| v == 0));
        assert!(k0.iter().all(|&v| v == 0));
    }

    #[test]
    fn k1_volume_fraction_tracks_halfspace() {
        // the phase-1 cube union matches the half-space volume fraction
        // within two coarse layers of the interface
        let set = TargetSet::HalfSpace { normal: vec![1.0, 0.0], offset: 0.03 };
        for (eps, eta, cells) in [(0.025, 0.4, 80usize), (0.0125, 0.4, 160)] {
            let f = SpinField::sample(
                &set,
                PeriodicLattice::cubic(2),
                eps,
                &[cells, cells],
                &restricted(2),
            )
            .unwrap();
            let p = params(eps, eta, 0.5);
            let r = classify(&f, &p).unwrap();
            let (k1, _) = k_sets(&r);
            let k1_fraction =
                k1.iter().map(|&v| v as f64).sum::<f64>() / k1.len() as f64;
            let window = cells as f64 * eps;
            let target_fraction = (0.03 + window / 2.0) / window;
            let two_layers = 2.0 / r.extents[0] as f64;
            assert!(
                (k1_fraction - target_fraction).abs() <= two_layers,
                "eps={eps}: k1 {k1_fraction} vs target {target_fraction} (tol {two_layers})"
            );
        }
    }

    #[test]
    fn boundary_measure_examples() {
        let wrap = [false, false];
        // single cube of side s in d=2: perimeter 4s
        assert_eq!(boundary_measure(&[1u8], &[1, 1], 0.5, &wrap), 4.0 * 0.5);
        // two adjacent cubes: 6s
        assert_eq!(boundary_measure(&[1u8, 1], &[1, 2], 0.5, &wrap), 6.0 * 0.5);
        // empty grid: 0
        assert_eq!(boundary_measure(&[0u8, 0], &[1, 2], 0.5, &wrap), 0.0);
        // a closed ring: wrapping hides the two end faces
        assert_eq!(boundary_measure(&[1u8, 1, 1, 1], &[1, 4], 1.0, &[false, false]), 10.0);
        assert_eq!(boundary_measure(&[1u8, 1, 1, 1], &[1, 4], 1.0, &[false, true]), 8.0);
    }

    #[test]
    fn mixed_measure_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vals: Vec<u8> = (0..24 * 24).map(|_| rng.gen_range(0..=1)).collect();
        let f =
            SpinField::from_values(PeriodicLattice::cubic(2), 0.25, &[24, 24], &restricted(2), vals)
                .unwrap();
        let p = params(0.25, 3.0, 0.5);
        let r = classify(&f, &p).unwrap();
        assert_eq!(r.mixed_measure, r.mixed_count as f64 * r.cube_side_physical.powi(2));
        assert_eq!(r.phase1_count + r.phase0_count + r.mixed_count, r.labels.len());
    }

    #[test]
    fn delta_monotonicity_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let vals: Vec<u8> =
                (0..18 * 18).map(|_| if rng.gen::<f64>() < 0.7 { 1 } else { 0 }).collect();
            let f = SpinField::from_values(
                PeriodicLattice::cubic(2),
                0.25,
                &[18, 18],
                &restricted(2),
                vals,
            )
            .unwrap();
            let r1 = classify(&f, &params(0.25, 3.0, 0.3)).unwrap();
            let r2 = classify(&f, &params(0.25, 3.0, 0.7)).unwrap();
            for (a, b) in r1.labels.iter().zip(&r2.labels) {
                // mixed set shrinks as delta grows
                if *b == CubeLabel::Mixed {
                    assert_eq!(*a, CubeLabel::Mixed);
                }
                // phase-1 set grows as delta grows
                if *a == CubeLabel::Phase1 {
                    assert_eq!(*b, CubeLabel::Phase1);
                }
            }
        }
    }

    #[test]
    fn partial_cubes_are_excluded() {
        let f = SpinField::constant(PeriodicLattice::cubic(2), 0.25, &[10, 7], &restricted(2), 1)
            .unwrap();
        let p = params(0.25, 3.0, 0.5); // side 3
        let r = classify(&f, &p).unwrap();
        assert_eq!(r.extents, vec![3, 2]);
        assert_eq!(r.excluded_partial_cubes, 4 * 3 - 3 * 2);
    }

    #[test]
    fn json_output_parses() {
        let f = SpinField::constant(PeriodicLattice::cubic(1), 0.5, &[8], &restricted(1), 1).unwrap();
        let p = params(0.5, 4.0, 0.5);
        let r = classify(&f, &p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["mixed_count"], 0);
        assert_eq!(v["labels_rle"][0][1], 4);
    }

    #[test]
    fn delta_bounds_checked() {
        assert!(CoarseGrainParams::new(0.1, 0.4, 0.0).is_err());
        assert!(CoarseGrainParams::new(0.1, 0.4, 1.0).is_err());
        let (_, w) = CoarseGrainParams::new(0.1, 0.5, 0.5).unwrap();
        // ideal side 1.25 -> 1 site, 20% off: below the warning threshold
        assert!(w.is_empty());
        let (_, w2) = CoarseGrainParams::new(0.1, 0.56, 0.5).unwrap();
        // ideal side 1.4 -> 1 site, ~29% off: warn
        assert_eq!(w2.len(), 1);
    }
}
