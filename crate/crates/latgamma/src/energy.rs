//! Scaled long-range pair energies.
//!
//! The energy of a spin field is
//!
//! ```text
//!   E(u) = eps^{2d} / eta^{d+1} * sum_{i,j} a(eps (i - j) / eta) |u_i - u_j|
//! ```
//!
//! with ordered pairs (each unordered pair counted twice, so the continuum
//! integrand needs no extra factor of 2). Both evaluation paths reduce the
//! double sum to shift counts `N_xi = #{i : u_{i+xi} != u_i}`:
//!
//! * the direct path scans sites per shift;
//! * the FFT path recovers every `N_xi` exactly from cross-correlations of
//!   the occupancy array via `|u_i - u_j| = u_i + u_j - 2 u_i u_j`, rounding
//!   each correlation to the nearest integer and failing loudly if the
//!   rounding residue is not negligible.
//!
//! Weighted counts are accumulated with pairwise summation in a fixed shift
//! order, so results do not depend on worker scheduling.

use crate::error::{Error, Result};
use crate::field::{AxisBound, BoxRegion, SpinField};
use crate::kernel::Kernel;
use crate::util::pairwise_sum;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;

/// Multiplicative modifier of the pair coefficients.
#[derive(Clone)]
pub enum CoefficientMask {
    /// Coefficients unchanged.
    Full,
    /// Zero on pairs where either endpoint lies on the sublattice `N Z^d`.
    Perforation { n: u32 },
    /// Keep the pair iff the predicate holds; must be symmetric in (i, j).
    Custom(Arc<dyn Fn(&[i64], &[i64]) -> bool + Send + Sync>),
}

impl std::fmt::Debug for CoefficientMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientMask::Full => write!(f, "Full"),
            CoefficientMask::Perforation { n } => write!(f, "Perforation({n})"),
            CoefficientMask::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl CoefficientMask {
    pub fn is_full(&self) -> bool {
        matches!(self, CoefficientMask::Full)
    }

    fn keeps(&self, i: &[i64], j: &[i64]) -> bool {
        match self {
            CoefficientMask::Full => true,
            CoefficientMask::Perforation { n } => {
                let nn = *n as i64;
                let on = |c: &[i64]| c.iter().all(|&v| v.rem_euclid(nn) == 0);
                !(on(i) || on(j))
            }
            CoefficientMask::Custom(p) => p(i, j),
        }
    }
}

/// Scaling pair (eps, eta) plus the kernel; defines the energy and its
/// prefactor `eps^{2d} / eta^{d+1}`.
#[derive(Debug, Clone)]
pub struct EnergyParams {
    pub eps: f64,
    pub eta: f64,
    pub kernel: Kernel,
    pub mask: CoefficientMask,
    /// Restrict the outer sum index to sites inside this box.
    pub localization: Option<BoxRegion>,
}

impl EnergyParams {
    pub fn new(eps: f64, eta: f64, kernel: Kernel) -> Result<EnergyParams> {
        if !(eps > 0.0) || !eps.is_finite() || !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Precondition(format!(
                "eps and eta must be positive, got {eps}, {eta}"
            )));
        }
        Ok(EnergyParams { eps, eta, kernel, mask: CoefficientMask::Full, localization: None })
    }

    pub fn with_mask(mut self, mask: CoefficientMask) -> EnergyParams {
        self.mask = mask;
        self
    }

    pub fn with_localization(mut self, region: BoxRegion) -> EnergyParams {
        self.localization = Some(region);
        self
    }

    /// eta / eps, the interaction range in sites.
    pub fn range_ratio(&self) -> f64 {
        self.eta / self.eps
    }

    /// eps^{2d} / eta^{d+1}; equals eps^{d-1} / R^{d+1} with R = eta/eps.
    pub fn prefactor(&self) -> f64 {
        let d = self.kernel.dim() as i32;
        self.eps.powi(2 * d) / self.eta.powi(d + 1)
    }

    /// Shifts reach `|xi| < support * eta / eps` (open).
    pub fn shift_norm_bound(&self) -> f64 {
        self.kernel.support_radius() * self.range_ratio()
    }

    /// Coefficient `a(eps * xi / eta)` of an integer shift.
    pub fn coefficient(&self, xi: &[i64]) -> f64 {
        let h = self.eps / self.eta;
        let mut n2 = 0.0;
        for &c in xi {
            let s = c as f64;
            n2 += s * s;
        }
        self.kernel.eval_radial(h * n2.sqrt())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !(self.eps < self.eta && self.eta < 1.0) {
            w.push(format!(
                "scaling expects eps < eta < 1 on experiment schedules (eps = {}, eta = {})",
                self.eps, self.eta
            ));
        }
        if self.range_ratio() < 4.0 {
            w.push(format!(
                "eta/eps = {} < 4: coarse-graining cubes of side eta/(4 eps) would be sub-site",
                self.range_ratio()
            ));
        }
        w
    }
}

/// Energy value plus any warnings raised during evaluation.
#[derive(Debug, Clone)]
pub struct EnergyValue {
    pub value: f64,
    pub warnings: Vec<String>,
}

/// All integer shifts with `0 < |xi|` inside the interaction range, in a
/// fixed lexicographic order. The filter carries a relative slack of 1e-9 so
/// no shift with a positive coefficient can be lost to rounding; extras carry
/// weight zero because the kernel vanishes from its support radius on.
pub fn shift_set(dim: usize, max_norm: f64) -> Vec<Vec<i64>> {
    enumerate_shifts(dim, max_norm, false)
}

/// One representative per `{xi, -xi}` pair (first nonzero component
/// positive). `N_xi = N_{-xi}`, so full-window sums use these with weight 2.
pub fn canonical_shift_set(dim: usize, max_norm: f64) -> Vec<Vec<i64>> {
    enumerate_shifts(dim, max_norm, true)
}

fn enumerate_shifts(dim: usize, max_norm: f64, canonical: bool) -> Vec<Vec<i64>> {
    if !(max_norm > 0.0) {
        return Vec::new();
    }
    let m = max_norm.ceil() as i64 + 1;
    let bound = max_norm * (1.0 + 1e-9);
    let bound2 = bound * bound;
    let mut out = Vec::new();
    let mut xi = vec![-m; dim];
    'outer: loop {
        let n2: f64 = xi.iter().map(|&c| (c * c) as f64).sum();
        let keep = n2 > 0.0
            && n2 < bound2
            && (!canonical || xi.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0));
        if keep {
            out.push(xi.clone());
        }
        for a in (0..dim).rev() {
            xi[a] += 1;
            if xi[a] <= m {
                continue 'outer;
            }
            xi[a] = -m;
            if a == 0 {
                break 'outer;
            }
        }
    }
    out
}

fn require_single_offset(f: &SpinField) -> Result<()> {
    if f.lattice().n_offsets() != 1 {
        return Err(Error::Unsupported(
            "energy evaluation is defined on single-offset (cubic-type) lattices".into(),
        ));
    }
    Ok(())
}

fn check_params(f: &SpinField, p: &EnergyParams) -> Result<()> {
    if p.kernel.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: p.kernel.dim() });
    }
    if p.eps != f.eps() {
        return Err(Error::Precondition(format!(
            "params eps = {} must match the field eps = {}",
            p.eps,
            f.eps()
        )));
    }
    Ok(())
}

fn window_range_warning(f: &SpinField, max_norm: f64) -> Option<String> {
    for a in 0..f.dim() {
        if !f.boundary()[a].is_periodic() && (f.extents()[a] as f64) < max_norm {
            return Some(format!(
                "restricted window extent {} on axis {a} is smaller than the interaction range {:.1}; \
                 pair sums proceed over available pairs",
                f.extents()[a],
                max_norm
            ));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// direct shift counting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum AxisKind {
    Restricted,
    Periodic,
}

/// Fast path needs a single offset and untwisted axes; otherwise the generic
/// walker handles the field.
fn axis_kinds(f: &SpinField) -> Option<Vec<AxisKind>> {
    if f.lattice().n_offsets() != 1 {
        return None;
    }
    f.boundary()
        .iter()
        .map(|b| match b {
            AxisBound::Restricted => Some(AxisKind::Restricted),
            AxisBound::Periodic { twist } => {
                twist.iter().all(|&t| t == 0).then_some(AxisKind::Periodic)
            }
        })
        .collect()
}

fn count_row(row: &[u8], prow: &[u8], xi: i64, kind: AxisKind) -> u64 {
    let n = row.len() as i64;
    let mut total = 0u64;
    match kind {
        AxisKind::Restricted => {
            let lo = (-xi).max(0);
            let hi = n - 1 - xi.max(0);
            for c in lo..=hi {
                total += (row[c as usize] != prow[(c + xi) as usize]) as u64;
            }
        }
        AxisKind::Periodic => {
            let s = xi.rem_euclid(n) as usize;
            let split = n as usize - s;
            for c in 0..split {
                total += (row[c] != prow[c + s]) as u64;
            }
            for c in split..n as usize {
                total += (row[c] != prow[c - split]) as u64;
            }
        }
    }
    total
}

fn count_fast(f: &SpinField, kinds: &[AxisKind], xi: &[i64]) -> u64 {
    let vals = f.values();
    let d = f.dim();
    let exts: Vec<i64> = f.extents().iter().map(|&n| n as i64).collect();
    let row_len = exts[d - 1] as usize;
    let partner_axis = |r: i64, a: usize| -> Option<i64> {
        let rp = r + xi[a];
        match kinds[a] {
            AxisKind::Restricted => (0..exts[a]).contains(&rp).then_some(rp),
            AxisKind::Periodic => Some(rp.rem_euclid(exts[a])),
        }
    };
    match d {
        1 => count_row(vals, vals, xi[0], kinds[0]),
        2 => {
            let mut total = 0;
            for r in 0..exts[0] {
                if let Some(rp) = partner_axis(r, 0) {
                    let row = &vals[r as usize * row_len..][..row_len];
                    let prow = &vals[rp as usize * row_len..][..row_len];
                    total += count_row(row, prow, xi[1], kinds[1]);
                }
            }
            total
        }
        3 => {
            let mut total = 0;
            for r0 in 0..exts[0] {
                let Some(p0) = partner_axis(r0, 0) else { continue };
                for r1 in 0..exts[1] {
                    let Some(p1) = partner_axis(r1, 1) else { continue };
                    let row = &vals[((r0 * exts[1] + r1) as usize) * row_len..][..row_len];
                    let prow = &vals[((p0 * exts[1] + p1) as usize) * row_len..][..row_len];
                    total += count_row(row, prow, xi[2], kinds[2]);
                }
            }
            total
        }
        _ => unreachable!(),
    }
}

/// Shape of a 2D strip with one twisted periodic axis and one restricted
/// axis, the geometry produced for rational half-space directions.
struct TwistedStrip {
    wrap_axis: usize,
    twist: i64,
}

fn twisted_strip_shape(f: &SpinField) -> Option<TwistedStrip> {
    if f.dim() != 2 || f.lattice().n_offsets() != 1 {
        return None;
    }
    let mut found = None;
    for a in 0..2 {
        match &f.boundary()[a] {
            AxisBound::Periodic { twist } => {
                if found.is_some() || !matches!(f.boundary()[1 - a], AxisBound::Restricted) {
                    return None;
                }
                found = Some(TwistedStrip { wrap_axis: a, twist: twist[1 - a] });
            }
            AxisBound::Restricted => {}
        }
    }
    found
}

fn count_span(a: &[u8], b: &[u8], a_start: usize, b_start: usize, len: usize) -> u64 {
    let mut total = 0u64;
    for k in 0..len {
        total += (a[a_start + k] != b[b_start + k]) as u64;
    }
    total
}

/// Row-sliced counting on a twisted strip. Each wrap crossing shifts the
/// partner by the twist along the restricted axis, so the work still splits
/// into contiguous row-vs-row spans.
fn count_twisted_2d(f: &SpinField, strip: &TwistedStrip, xi: &[i64]) -> u64 {
    let vals = f.values();
    let n0 = f.extents()[0] as i64;
    let n1 = f.extents()[1] as i64;
    let row = |r: i64| -> &[u8] { &vals[(r * n1) as usize..][..n1 as usize] };
    let mut total = 0u64;
    if strip.wrap_axis == 0 {
        // rows wrap (carrying a column twist), columns restricted
        for r in 0..n0 {
            let q = (r + xi[0]).div_euclid(n0);
            let rp = r + xi[0] - q * n0;
            let s = xi[1] - q * strip.twist;
            let lo = (-s).max(0);
            let hi = n1 - 1 - s.max(0);
            if lo <= hi {
                total += count_span(row(r), row(rp), lo as usize, (lo + s) as usize, (hi - lo + 1) as usize);
            }
        }
    } else {
        // columns wrap (carrying a row twist), rows restricted; at most one
        // wrap since |xi_1| stays below the interaction range
        for r in 0..n0 {
            for (q, c_lo, c_hi) in [
                (0i64, (-xi[1]).max(0), n1 - 1 - xi[1].max(0)),
                (1, n1 - xi[1], n1 - 1),
                (-1, 0, -xi[1] - 1),
            ] {
                if c_lo > c_hi {
                    continue;
                }
                let rp = r + xi[0] - q * strip.twist;
                if rp < 0 || rp >= n0 {
                    continue;
                }
                let b_start = c_lo + xi[1] - q * n1;
                total += count_span(
                    row(r),
                    row(rp),
                    c_lo as usize,
                    b_start as usize,
                    (c_hi - c_lo + 1) as usize,
                );
            }
        }
    }
    total
}

fn count_generic(f: &SpinField, xi: &[i64]) -> u64 {
    let d = f.dim();
    let n_off = f.lattice().n_offsets();
    let mut total = 0u64;
    let mut cell = f.origin_vec();
    let mut partner = vec![0i64; d];
    let mut wrapped = vec![0i64; d];
    loop {
        for a in 0..d {
            partner[a] = cell[a] + xi[a];
        }
        if f.wrap_cell(&partner, &mut wrapped).is_some() {
            let base = f.storage_index(&cell, 0).unwrap();
            let pbase = f.storage_index(&wrapped, 0).unwrap();
            for oi in 0..n_off {
                total += (f.values()[base + oi] != f.values()[pbase + oi]) as u64;
            }
        }
        if !f.advance_cell(&mut cell) {
            break;
        }
    }
    total
}

fn count_one(f: &SpinField, kinds: &Option<Vec<AxisKind>>, strip: &Option<TwistedStrip>, xi: &[i64]) -> u64 {
    if let Some(kinds) = kinds {
        return count_fast(f, kinds, xi);
    }
    if let Some(strip) = strip {
        // the segment split assumes at most one wrap per pair
        if xi[strip.wrap_axis].unsigned_abs() < f.extents()[strip.wrap_axis] as u64 {
            return count_twisted_2d(f, strip, xi);
        }
    }
    count_generic(f, xi)
}

/// `N_xi`: number of window sites whose value differs from the site shifted
/// by `xi`, with the field's boundary convention applied to the partner.
pub fn pair_difference_count(f: &SpinField, xi: &[i64]) -> Result<u64> {
    if xi.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: xi.len() });
    }
    Ok(count_one(f, &axis_kinds(f), &twisted_strip_shape(f), xi))
}

/// Direct-path counts for a batch of shifts (parallel over shifts, output in
/// shift order).
pub fn shift_counts_direct(f: &SpinField, shifts: &[Vec<i64>]) -> Vec<u64> {
    let kinds = axis_kinds(f);
    let strip = twisted_strip_shape(f);
    shifts.par_iter().map(|xi| count_one(f, &kinds, &strip, xi)).collect()
}

/// Row-sliced perforation-masked count for single-offset untwisted fields.
/// Mask coordinates are the unwrapped infinite-lattice pair `(i, i + xi)`.
fn count_perforation_fast(
    f: &SpinField,
    kinds: &[AxisKind],
    xi: &[i64],
    n_perf: i64,
) -> u64 {
    let d = f.dim();
    let vals = f.values();
    let exts: Vec<i64> = f.extents().iter().map(|&n| n as i64).collect();
    let row_len = exts[d - 1] as usize;
    let orig: Vec<i64> = (0..d).map(|a| f.origin(a)).collect();
    // sublattice membership along the row axis, for both endpoints
    let on_col: Vec<bool> =
        (0..row_len).map(|c| (orig[d - 1] + c as i64).rem_euclid(n_perf) == 0).collect();
    let on_col_shift: Vec<bool> = (0..row_len)
        .map(|c| (orig[d - 1] + c as i64 + xi[d - 1]).rem_euclid(n_perf) == 0)
        .collect();
    let partner_axis = |r: i64, a: usize| -> Option<i64> {
        let rp = r + xi[a];
        match kinds[a] {
            AxisKind::Restricted => (0..exts[a]).contains(&rp).then_some(rp),
            AxisKind::Periodic => Some(rp.rem_euclid(exts[a])),
        }
    };
    // leading-axes sublattice flags use unwrapped coordinates
    let lead_on = |r: i64, a: usize| (orig[a] + r).rem_euclid(n_perf) == 0;
    let lead_on_shift = |r: i64, a: usize| (orig[a] + r + xi[a]).rem_euclid(n_perf) == 0;

    let count_masked_row = |row: &[u8], prow: &[u8], i_on: bool, j_on: bool| -> u64 {
        let n = row.len() as i64;
        let s = xi[d - 1];
        let mut total = 0u64;
        let mut tally = |c: usize, cp: usize| {
            let keep = !((i_on && on_col[c]) || (j_on && on_col_shift[c]));
            total += (keep && row[c] != prow[cp]) as u64;
        };
        match kinds[d - 1] {
            AxisKind::Restricted => {
                let lo = (-s).max(0);
                let hi = n - 1 - s.max(0);
                for c in lo..=hi {
                    tally(c as usize, (c + s) as usize);
                }
            }
            AxisKind::Periodic => {
                let sm = s.rem_euclid(n) as usize;
                let split = n as usize - sm;
                for c in 0..split {
                    tally(c, c + sm);
                }
                for c in split..n as usize {
                    tally(c, c - split);
                }
            }
        }
        total
    };

    match d {
        1 => count_masked_row(vals, vals, true, true),
        2 => {
            let mut total = 0;
            for r in 0..exts[0] {
                if let Some(rp) = partner_axis(r, 0) {
                    let row = &vals[r as usize * row_len..][..row_len];
                    let prow = &vals[rp as usize * row_len..][..row_len];
                    total += count_masked_row(row, prow, lead_on(r, 0), lead_on_shift(r, 0));
                }
            }
            total
        }
        3 => {
            let mut total = 0;
            for r0 in 0..exts[0] {
                let Some(p0) = partner_axis(r0, 0) else { continue };
                for r1 in 0..exts[1] {
                    let Some(p1) = partner_axis(r1, 1) else { continue };
                    let row = &vals[((r0 * exts[1] + r1) as usize) * row_len..][..row_len];
                    let prow = &vals[((p0 * exts[1] + p1) as usize) * row_len..][..row_len];
                    let i_on = lead_on(r0, 0) && lead_on(r1, 1);
                    let j_on = lead_on_shift(r0, 0) && lead_on_shift(r1, 1);
                    total += count_masked_row(row, prow, i_on, j_on);
                }
            }
            total
        }
        _ => unreachable!(),
    }
}

/// Masked / localized count: differing pairs with outer site inside the
/// localization region (if any) and the pair kept by the mask.
fn count_constrained(f: &SpinField, xi: &[i64], p: &EnergyParams) -> u64 {
    if p.localization.is_none() {
        if let CoefficientMask::Perforation { n } = p.mask {
            if let Some(kinds) = axis_kinds(f) {
                return count_perforation_fast(f, &kinds, xi, n as i64);
            }
        }
    }
    count_constrained_generic(f, xi, p)
}

fn count_constrained_generic(f: &SpinField, xi: &[i64], p: &EnergyParams) -> u64 {
    let d = f.dim();
    let mut total = 0u64;
    let mut cell = f.origin_vec();
    let mut partner = vec![0i64; d];
    let mut wrapped = vec![0i64; d];
    let mut x = vec![0.0; d];
    let eps = f.eps();
    loop {
        let outer_ok = match &p.localization {
            None => true,
            Some(region) => {
                for a in 0..d {
                    x[a] = eps * cell[a] as f64;
                }
                region.contains(&x)
            }
        };
        if outer_ok {
            for a in 0..d {
                partner[a] = cell[a] + xi[a];
            }
            if f.wrap_cell(&partner, &mut wrapped).is_some() && p.mask.keeps(&cell, &partner) {
                let vi = f.values()[f.storage_index(&cell, 0).unwrap()];
                let vj = f.values()[f.storage_index(&wrapped, 0).unwrap()];
                total += (vi != vj) as u64;
            }
        }
        if !f.advance_cell(&mut cell) {
            break;
        }
    }
    total
}

fn assemble(p: &EnergyParams, shifts: &[Vec<i64>], counts: &[u64], pair_weight: f64) -> f64 {
    let terms: Vec<f64> = shifts
        .iter()
        .zip(counts)
        .map(|(xi, &n)| pair_weight * p.coefficient(xi) * n as f64)
        .collect();
    p.prefactor() * pairwise_sum(&terms)
}

/// Evaluate the energy by direct pair counting. Handles every boundary
/// convention, masks and localization.
pub fn energy_direct(f: &SpinField, p: &EnergyParams) -> Result<EnergyValue> {
    check_params(f, p)?;
    require_single_offset(f)?;
    let mut warnings = p.warnings();
    if let Some(w) = window_range_warning(f, p.shift_norm_bound()) {
        warnings.push(w);
    }
    let value = if p.mask.is_full() && p.localization.is_none() {
        let shifts = canonical_shift_set(f.dim(), p.shift_norm_bound());
        let counts = shift_counts_direct(f, &shifts);
        assemble(p, &shifts, &counts, 2.0)
    } else if p.localization.is_none() {
        // masks are symmetric in (i, j) by contract, so mirrored shifts
        // count the same pairs
        let shifts = canonical_shift_set(f.dim(), p.shift_norm_bound());
        let counts: Vec<u64> = shifts.par_iter().map(|xi| count_constrained(f, xi, p)).collect();
        assemble(p, &shifts, &counts, 2.0)
    } else {
        let shifts = shift_set(f.dim(), p.shift_norm_bound());
        let counts: Vec<u64> = shifts.par_iter().map(|xi| count_constrained(f, xi, p)).collect();
        assemble(p, &shifts, &counts, 1.0)
    };
    Ok(EnergyValue { value, warnings })
}

// ---------------------------------------------------------------------------
// FFT cross-correlation path
// ---------------------------------------------------------------------------

/// Exact box sums of the occupancy over the restricted axes (periodic axes
/// summed out), for the `u_i + u_j` part of the binary identity. Pure integer
/// arithmetic.
struct RestrictedPrefix {
    dims: Vec<usize>,
    axes: Vec<usize>,
    table: Vec<i64>,
}

impl RestrictedPrefix {
    fn build(f: &SpinField) -> RestrictedPrefix {
        let axes: Vec<usize> = (0..f.dim()).filter(|&a| !f.boundary()[a].is_periodic()).collect();
        let dims: Vec<usize> = axes.iter().map(|&a| f.extents()[a]).collect();
        let reduced_len: usize = dims.iter().product::<usize>().max(1);
        let mut reduced = vec![0i64; reduced_len];
        let d = f.dim();
        let exts = f.extents().to_vec();
        let mut idx = vec![0usize; d];
        for (site, &v) in f.values().iter().enumerate() {
            if v != 0 {
                let mut rem = site;
                for a in (0..d).rev() {
                    idx[a] = rem % exts[a];
                    rem /= exts[a];
                }
                let mut ri = 0usize;
                for (k, &a) in axes.iter().enumerate() {
                    ri = ri * dims[k] + idx[a];
                }
                reduced[ri] += 1;
            }
        }
        if dims.is_empty() {
            return RestrictedPrefix { dims, axes, table: reduced };
        }
        // running prefix along each axis in turn
        let mut table = reduced;
        let strides: Vec<usize> = {
            let mut s = vec![1usize; dims.len()];
            for k in (0..dims.len().saturating_sub(1)).rev() {
                s[k] = s[k + 1] * dims[k + 1];
            }
            s
        };
        for k in 0..dims.len() {
            for i in 0..table.len() {
                let coord = (i / strides[k]) % dims[k];
                if coord > 0 {
                    table[i] += table[i - strides[k]];
                }
            }
        }
        RestrictedPrefix { dims, axes, table }
    }

    /// Prefix value at inclusive corner `c` (componentwise min with dims-1);
    /// zero if any component is negative.
    fn corner(&self, c: &[i64]) -> i64 {
        let mut idx = 0usize;
        for k in 0..self.dims.len() {
            if c[k] < 0 {
                return 0;
            }
            let cc = (c[k].min(self.dims[k] as i64 - 1)) as usize;
            idx = idx * self.dims[k] + cc;
        }
        self.table[idx]
    }

    /// Sum over the inclusive box `[lo_k, hi_k]`.
    fn box_sum(&self, lo: &[i64], hi: &[i64]) -> i64 {
        if self.dims.is_empty() {
            return self.table[0];
        }
        for k in 0..self.dims.len() {
            if lo[k] > hi[k] || hi[k] < 0 || lo[k] >= self.dims[k] as i64 {
                return 0;
            }
        }
        let mut total = 0i64;
        let n = self.dims.len();
        let mut corner = vec![0i64; n];
        for mask in 0u32..(1 << n) {
            let mut bits = 0u32;
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    bits += 1;
                    corner[k] = lo[k] - 1;
                } else {
                    corner[k] = hi[k];
                }
            }
            let v = self.corner(&corner);
            total += if bits % 2 == 0 { v } else { -v };
        }
        total
    }

    /// `sum u_i` (or `sum u_{i+xi}` when `shifted`) over sites where both
    /// `i` and `i + xi` satisfy every restricted axis.
    fn overlap_sum(&self, xi: &[i64], shifted: bool) -> i64 {
        let n = self.axes.len();
        let mut lo = vec![0i64; n];
        let mut hi = vec![0i64; n];
        for (k, &a) in self.axes.iter().enumerate() {
            let ext = self.dims[k] as i64;
            let l = (-xi[a]).max(0);
            let h = ext - 1 - xi[a].max(0);
            if shifted {
                lo[k] = l + xi[a];
                hi[k] = h + xi[a];
            } else {
                lo[k] = l;
                hi[k] = h;
            }
        }
        self.box_sum(&lo, &hi)
    }
}

struct FftAxis {
    axis: usize,
    len: usize,
    padded: usize,
}

fn plan_fft_axis(f: &SpinField, max_shift: i64) -> FftAxis {
    let d = f.dim();
    // prefer a plain periodic axis: circular correlation needs no padding
    let axis = (0..d)
        .rev()
        .find(|&a| f.boundary()[a].is_periodic())
        .unwrap_or(d - 1);
    let len = f.extents()[axis];
    let padded = if f.boundary()[axis].is_periodic() {
        len
    } else {
        // zero-pad so circular correlation equals linear correlation for
        // every lag within the interaction range (next power of two)
        (len + max_shift as usize).max(2).next_power_of_two()
    };
    FftAxis { axis, len, padded }
}

/// Correlation lag arrays grouped by the shift components on the non-FFT
/// axes.
struct Correlations {
    fft_axis: usize,
    padded: usize,
    leads: Vec<Vec<i64>>,
    lags: Vec<Vec<f64>>,
}

impl Correlations {
    fn value(&self, xi: &[i64]) -> f64 {
        let lead: Vec<i64> = xi
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != self.fft_axis)
            .map(|(_, &c)| c)
            .collect();
        let li = self.leads.binary_search(&lead).expect("lead combination missing");
        let lag = xi[self.fft_axis].rem_euclid(self.padded as i64) as usize;
        self.lags[li][lag]
    }
}

fn correlate_lines(f: &SpinField, axis: &FftAxis, shifts: &[Vec<i64>]) -> Result<Correlations> {
    let d = f.dim();
    let m = axis.padded;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);

    let lead_axes: Vec<usize> = (0..d).filter(|&a| a != axis.axis).collect();
    let lead_exts: Vec<i64> = lead_axes.iter().map(|&a| f.extents()[a] as i64).collect();
    let lead_periodic: Vec<bool> =
        lead_axes.iter().map(|&a| f.boundary()[a].is_periodic()).collect();
    let n_lines: usize = lead_exts.iter().product::<i64>().max(1) as usize;

    let bytes = n_lines
        .checked_mul(m)
        .and_then(|v| v.checked_mul(std::mem::size_of::<Complex<f64>>()))
        .ok_or_else(|| Error::Unsupported("field too large for the fft path".into()))?;
    if bytes > 1usize << 31 {
        return Err(Error::Unsupported(format!(
            "fft path would need {} MiB of line spectra; use the direct path",
            bytes >> 20
        )));
    }

    let mut leads: Vec<Vec<i64>> = shifts
        .iter()
        .map(|xi| lead_axes.iter().map(|&a| xi[a]).collect::<Vec<i64>>())
        .collect();
    leads.sort();
    leads.dedup();

    // one transformed line per leading-axes combination
    let exts = f.extents().to_vec();
    let fft_stride: usize = exts[axis.axis + 1..].iter().product();
    let line_base = |line: usize| -> usize {
        let mut rem = line;
        let mut site = 0usize;
        let mut coords = vec![0usize; d];
        for (k, &a) in lead_axes.iter().enumerate().rev() {
            coords[a] = rem % lead_exts[k] as usize;
            rem /= lead_exts[k] as usize;
        }
        for (a, &c) in coords.iter().enumerate() {
            site = site * exts[a] + if a == axis.axis { 0 } else { c };
        }
        site
    };
    let values = f.values();
    let mut spectra: Vec<Vec<Complex<f64>>> = (0..n_lines)
        .into_par_iter()
        .map(|line| {
            let base = line_base(line);
            let mut buf = vec![Complex::new(0.0, 0.0); m];
            for s in 0..axis.len {
                buf[s] = Complex::new(values[base + s * fft_stride] as f64, 0.0);
            }
            buf
        })
        .collect();
    spectra.par_iter_mut().for_each(|line| fwd.process(line));

    let partner_of = |line: usize, lead: &[i64]| -> Option<usize> {
        let mut rem = line;
        let mut coords = vec![0i64; lead_axes.len()];
        for k in (0..lead_axes.len()).rev() {
            coords[k] = (rem % lead_exts[k] as usize) as i64;
            rem /= lead_exts[k] as usize;
        }
        let mut idx = 0usize;
        for k in 0..lead_axes.len() {
            let mut c = coords[k] + lead[k];
            if lead_periodic[k] {
                c = c.rem_euclid(lead_exts[k]);
            } else if c < 0 || c >= lead_exts[k] {
                return None;
            }
            idx = idx * lead_exts[k] as usize + c as usize;
        }
        Some(idx)
    };

    // accumulate conj(F_line) * F_partner per lead combination (fixed line
    // order within each), then one inverse transform per combination
    let lags: Vec<Vec<f64>> = leads
        .par_iter()
        .map(|lead| {
            let mut acc = vec![Complex::new(0.0, 0.0); m];
            for line in 0..n_lines {
                if let Some(p) = partner_of(line, lead) {
                    let fa = &spectra[line];
                    let fb = &spectra[p];
                    for k in 0..m {
                        acc[k] += fa[k].conj() * fb[k];
                    }
                }
            }
            inv.process(&mut acc);
            let scale = 1.0 / m as f64;
            acc.iter().map(|z| z.re * scale).collect()
        })
        .collect();

    Ok(Correlations { fft_axis: axis.axis, padded: m, leads, lags })
}

/// FFT-path counts for the given shifts. Exact integers; errors if any
/// correlation fails the rounding check (residue above `1e-6 * sites`).
pub fn shift_counts_fft(f: &SpinField, shifts: &[Vec<i64>]) -> Result<Vec<u64>> {
    require_single_offset(f)?;
    if f.boundary()
        .iter()
        .any(|b| matches!(b, AxisBound::Periodic { twist } if twist.iter().any(|&t| t != 0)))
    {
        return Err(Error::Unsupported(
            "the fft path does not handle twisted boundaries; use the direct path".into(),
        ));
    }
    if shifts.is_empty() {
        return Ok(Vec::new());
    }
    let max_shift = shifts.iter().flat_map(|xi| xi.iter().map(|&c| c.abs())).max().unwrap_or(0);
    let fft_axis = plan_fft_axis(f, max_shift);
    let prefix = RestrictedPrefix::build(f);
    let correlations = correlate_lines(f, &fft_axis, shifts)?;

    let threshold = 1e-6 * f.site_count() as f64;
    let mut max_residue = 0.0f64;
    let mut out = Vec::with_capacity(shifts.len());
    for xi in shifts {
        let p1 = prefix.overlap_sum(xi, false);
        let p2 = prefix.overlap_sum(xi, true);
        let c_raw = correlations.value(xi);
        let c_round = c_raw.round();
        max_residue = max_residue.max((c_raw - c_round).abs());
        let n = p1 + p2 - 2 * (c_round as i64);
        if n < 0 {
            return Err(Error::FftRounding {
                max_residue: (c_raw - c_round).abs().max(1.0),
                threshold,
            });
        }
        out.push(n as u64);
    }
    if max_residue > threshold {
        return Err(Error::FftRounding { max_residue, threshold });
    }
    Ok(out)
}

/// Evaluate the energy through the FFT correlation path. Identical counts to
/// the direct path; restricted axes fall back to zero-padded correlation.
pub fn energy_fft(f: &SpinField, p: &EnergyParams) -> Result<EnergyValue> {
    check_params(f, p)?;
    if !p.mask.is_full() || p.localization.is_some() {
        return Err(Error::Unsupported(
            "the fft path evaluates the plain energy; masks and localization use energy_direct".into(),
        ));
    }
    let mut warnings = p.warnings();
    if let Some(w) = window_range_warning(f, p.shift_norm_bound()) {
        warnings.push(w);
    }
    let shifts = canonical_shift_set(f.dim(), p.shift_norm_bound());
    let counts = shift_counts_fft(f, &shifts)?;
    let value = assemble(p, &shifts, &counts, 2.0);
    Ok(EnergyValue { value, warnings })
}

// ---------------------------------------------------------------------------
// line jumps
// ---------------------------------------------------------------------------

/// Walk the discrete line through `base` in direction `xi`, reporting
/// (jump count, whether any jump occurred) and marking visited storage
/// indices when a mark buffer is supplied.
fn walk_line(
    f: &SpinField,
    xi: &[i64],
    base: &[i64],
    mut marks: Option<&mut [bool]>,
) -> Result<u64> {
    let d = f.dim();
    let guard = f.site_count() + 2;
    let mut rep = vec![0i64; d];
    f.wrap_cell(base, &mut rep).ok_or(Error::OutsideWindow)?;
    let base_idx = f.storage_index(&rep, 0).unwrap();

    // find the line start (restricted end) or detect a closed orbit
    let mut start = base.to_vec();
    let mut closed = false;
    let mut probe = vec![0i64; d];
    for _ in 0..guard {
        for a in 0..d {
            probe[a] = start[a] - xi[a];
        }
        match f.wrap_cell(&probe, &mut rep) {
            None => break,
            Some(()) => {
                if f.storage_index(&rep, 0).unwrap() == base_idx {
                    closed = true;
                    start = base.to_vec();
                    break;
                }
                start.copy_from_slice(&probe);
            }
        }
    }

    f.wrap_cell(&start, &mut rep).unwrap();
    let first_idx = f.storage_index(&rep, 0).unwrap();
    if let Some(mk) = marks.as_deref_mut() {
        mk[first_idx] = true;
    }
    let mut cur = start;
    let mut cur_val = f.values()[first_idx];
    let mut jumps = 0u64;
    let mut next = vec![0i64; d];
    for _ in 0..guard {
        for a in 0..d {
            next[a] = cur[a] + xi[a];
        }
        if f.wrap_cell(&next, &mut rep).is_none() {
            break;
        }
        let idx = f.storage_index(&rep, 0).unwrap();
        let v = f.values()[idx];
        if v != cur_val {
            jumps += 1;
        }
        if closed && idx == first_idx {
            break;
        }
        if let Some(mk) = marks.as_deref_mut() {
            mk[idx] = true;
        }
        cur.copy_from_slice(&next);
        cur_val = v;
    }
    Ok(jumps)
}

/// Jumps of the field along the discrete line `base + k xi`: consecutive
/// pairs with different values, both endpoints in the window. Periodic
/// orbits close and include the wrap-around pair.
pub fn count_line_jumps(f: &SpinField, xi: &[i64], base: &[i64]) -> Result<u64> {
    if xi.len() != f.dim() || base.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: xi.len() });
    }
    if xi.iter().all(|&c| c == 0) {
        return Err(Error::Precondition("line direction must be nonzero".into()));
    }
    require_single_offset(f)?;
    walk_line(f, xi, base, None)
}

/// Lower bound on the energy by line counting: every discrete line in
/// direction `xi` that changes value contributes at least one differing
/// pair, so `prefactor * sum_xi a(eps xi / eta) * #{jumping lines}` never
/// exceeds the energy.
pub fn line_jump_lower_bound(f: &SpinField, p: &EnergyParams) -> Result<f64> {
    check_params(f, p)?;
    require_single_offset(f)?;
    let d = f.dim();
    let shifts = canonical_shift_set(d, p.shift_norm_bound());
    let n_sites = f.site_count();
    let lines_with_jump: Vec<u64> = shifts
        .par_iter()
        .map(|xi| {
            let mut marks = vec![false; n_sites];
            let mut lines = 0u64;
            let mut cell = f.origin_vec();
            loop {
                let idx = f.storage_index(&cell, 0).unwrap();
                if !marks[idx] {
                    let jumps = walk_line(f, xi, &cell, Some(&mut marks)).unwrap();
                    if jumps > 0 {
                        lines += 1;
                    }
                }
                if !f.advance_cell(&mut cell) {
                    break;
                }
            }
            lines
        })
        .collect();
    let terms: Vec<f64> = shifts
        .iter()
        .zip(&lines_with_jump)
        .map(|(xi, &l)| 2.0 * p.coefficient(xi) * l as f64)
        .collect();
    Ok(p.prefactor() * pairwise_sum(&terms))
}
