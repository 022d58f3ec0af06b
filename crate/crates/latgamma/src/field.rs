//! Binary spin configurations on a finite window of a scaled lattice.
//!
//! A `SpinField` stores one value in {0,1} per site of `eps * L` inside a
//! window of whole unit cells. The window is centered: cell indices run from
//! `-floor(n/2)` to `-floor(n/2) + n - 1` on each axis, a convention shared
//! with the SPIN1 file format.
//!
//! Boundaries are per-axis. A `Restricted` axis confines interactions to the
//! window; a `Periodic` axis wraps. Wrapping may carry a `twist`: crossing
//! the axis once translates the other (restricted) coordinates by a fixed
//! integer vector, which makes half-spaces with rational normals exactly
//! periodic along the interface and removes spurious wall interfaces.

use crate::error::{Error, Result};
use crate::lattice::PeriodicLattice;

/// Per-axis boundary convention.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisBound {
    Restricted,
    /// Wrap this axis; on each wrap, shift the other axes by `twist`
    /// (site units). `twist[axis]` must be 0 and twists may only point
    /// into restricted axes. A plain periodic axis has a zero twist.
    Periodic { twist: Vec<i64> },
}

impl AxisBound {
    pub fn periodic(dim: usize) -> AxisBound {
        AxisBound::Periodic { twist: vec![0; dim] }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, AxisBound::Periodic { .. })
    }
}

/// Axis-aligned box, half-open: `lo <= x < hi` componentwise. Physical
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> BoxRegion {
        BoxRegion { lo, hi }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&c, (&l, &h))| l <= c && c < h)
    }
}

/// A half-space constraint `<x, normal> < offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceCut {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Sets sampled onto lattice windows.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    FullSpace,
    /// `{x : <x, normal> < offset}` (strict, matching the open half-space).
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Intersection of half-space constraints; the list must be nonempty.
    Polytope(Vec<HalfSpaceCut>),
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Value 0 exactly on the sublattice `N Z^d`, 1 elsewhere. Site-indexed,
    /// not geometric: only integer sites (offset 0) can belong to `N Z^d`.
    PerforatedConstant { n: u32 },
    Complement(Box<TargetSet>),
}

impl TargetSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            TargetSet::FullSpace => Ok(()),
            TargetSet::HalfSpace { normal, .. } => {
                if normal.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: normal.len() });
                }
                Ok(())
            }
            TargetSet::Polytope(cuts) => {
                if cuts.is_empty() {
                    return Err(Error::InvalidField("polytope needs at least one constraint".into()));
                }
                for c in cuts {
                    if c.normal.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: c.normal.len() });
                    }
                }
                Ok(())
            }
            TargetSet::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidField("ball radius must be positive".into()));
                }
                Ok(())
            }
            TargetSet::PerforatedConstant { n } => {
                if *n < 2 {
                    return Err(Error::InvalidField("perforation N must be >= 2".into()));
                }
                Ok(())
            }
            TargetSet::Complement(inner) => inner.validate(dim),
        }
    }

    /// Membership of the site `(cell, offset)` of the lattice scaled by `eps`.
    pub fn contains_site(&self, cell: &[i64], offset: &[f64], eps: f64) -> bool {
        match self {
            TargetSet::FullSpace => true,
            TargetSet::HalfSpace { normal, offset: c } => {
                let mut s = 0.0;
                for a in 0..cell.len() {
                    s += eps * (cell[a] as f64 + offset[a]) * normal[a];
                }
                s < *c
            }
            TargetSet::Polytope(cuts) => cuts.iter().all(|cut| {
                let mut s = 0.0;
                for a in 0..cell.len() {
                    s += eps * (cell[a] as f64 + offset[a]) * cut.normal[a];
                }
                s < cut.offset
            }),
            TargetSet::Ball { center, radius } => {
                let mut d2 = 0.0;
                for a in 0..cell.len() {
                    let dx = eps * (cell[a] as f64 + offset[a]) - center[a];
                    d2 += dx * dx;
                }
                d2.sqrt() < *radius
            }
            TargetSet::PerforatedConstant { n } => {
                let on_sublattice = offset.iter().all(|&c| c == 0.0)
                    && cell.iter().all(|&c| c.rem_euclid(*n as i64) == 0);
                !on_sublattice
            }
            TargetSet::Complement(inner) => !inner.contains_site(cell, offset, eps),
        }
    }

    /// Translate the set by `t` (geometric variants only).
    pub fn translated(&self, t: &[f64]) -> Result<TargetSet> {
        match self {
            TargetSet::FullSpace => Ok(TargetSet::FullSpace),
            TargetSet::HalfSpace { normal, offset } => Ok(TargetSet::HalfSpace {
                normal: normal.clone(),
                offset: offset + crate::util::dot(normal, t),
            }),
            TargetSet::Polytope(cuts) => Ok(TargetSet::Polytope(
                cuts.iter()
                    .map(|c| HalfSpaceCut {
                        normal: c.normal.clone(),
                        offset: c.offset + crate::util::dot(&c.normal, t),
                    })
                    .collect(),
            )),
            TargetSet::Ball { center, radius } => Ok(TargetSet::Ball {
                center: center.iter().zip(t).map(|(c, s)| c + s).collect(),
                radius: *radius,
            }),
            TargetSet::PerforatedConstant { .. } => {
                Err(Error::Unsupported("perforated-constant sets are site-indexed, not translatable".into()))
            }
            TargetSet::Complement(inner) => {
                Ok(TargetSet::Complement(Box::new(inner.translated(t)?)))
            }
        }
    }
}

/// A binary spin configuration on a lattice window.
#[derive(Debug, Clone)]
pub struct SpinField {
    lattice: PeriodicLattice,
    eps: f64,
    extents: Vec<usize>,
    boundary: Vec<AxisBound>,
    values: Vec<u8>,
}

fn validate_boundary(dim: usize, boundary: &[AxisBound]) -> Result<()> {
    if boundary.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: boundary.len() });
    }
    for (a, b) in boundary.iter().enumerate() {
        if let AxisBound::Periodic { twist } = b {
            if twist.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: twist.len() });
            }
            if twist[a] != 0 {
                return Err(Error::InvalidField(format!("twist of axis {a} must be 0 along itself")));
            }
            for (b2, &t) in twist.iter().enumerate() {
                if t != 0 && boundary[b2].is_periodic() {
                    return Err(Error::InvalidField(format!(
                        "twist of axis {a} points into periodic axis {b2}; twists may only shift restricted axes"
                    )));
                }
            }
        }
    }
    Ok(())
}

impl SpinField {
    /// Sample the characteristic function of a target set: `u_i = 1` iff the
    /// scaled site lies in the set.
    pub fn sample(
        set: &TargetSet,
        lattice: PeriodicLattice,
        eps: f64,
        extents: &[usize],
        boundary: &[AxisBound],
    ) -> Result<SpinField> {
        set.validate(lattice.dim())?;
        let mut f = SpinField::constant(lattice, eps, extents, boundary, 0)?;
        let dim = f.dim();
        let n_off = f.lattice.n_offsets();
        let mut cell = f.origin_vec();
        let mut idx = 0usize;
        loop {
            for oi in 0..n_off {
                let off = &f.lattice.offsets()[oi];
                f.values[idx] = set.contains_site(&cell, off, eps) as u8;
                idx += 1;
            }
            if !f.advance_cell(&mut cell) {
                break;
            }
        }
        let _ = dim;
        Ok(f)
    }

    /// A field with every value equal to `value`.
    pub fn constant(
        lattice: PeriodicLattice,
        eps: f64,
        extents: &[usize],
        boundary: &[AxisBound],
        value: u8,
    ) -> Result<SpinField> {
        let dim = lattice.dim();
        if extents.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: extents.len() });
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(Error::InvalidField("window extents must be >= 1".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidField(format!("eps must be positive, got {eps}")));
        }
        if value > 1 {
            return Err(Error::InvalidField("spin values are 0 or 1".into()));
        }
        validate_boundary(dim, boundary)?;
        let n_sites: usize = extents.iter().product::<usize>() * lattice.n_offsets();
        Ok(SpinField {
            lattice,
            eps,
            extents: extents.to_vec(),
            boundary: boundary.to_vec(),
            values: vec![value; n_sites],
        })
    }

    /// Build a field from raw values (cell-major, offset fastest).
    pub fn from_values(
        lattice: PeriodicLattice,
        eps: f64,
        extents: &[usize],
        boundary: &[AxisBound],
        values: Vec<u8>,
    ) -> Result<SpinField> {
        let mut f = SpinField::constant(lattice, eps, extents, boundary, 0)?;
        if values.len() != f.values.len() {
            return Err(Error::InvalidField(format!(
                "value count {} does not match window ({} sites)",
                values.len(),
                f.values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidField("spin values are 0 or 1".into()));
        }
        f.values = values;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn boundary(&self) -> &[AxisBound] {
        &self.boundary
    }

    pub fn lattice(&self) -> &PeriodicLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// First cell index on each axis (centered-window convention).
    pub fn origin(&self, axis: usize) -> i64 {
        -((self.extents[axis] / 2) as i64)
    }

    pub fn origin_vec(&self) -> Vec<i64> {
        (0..self.dim()).map(|a| self.origin(a)).collect()
    }

    /// The physical box covered by the window.
    pub fn window_region(&self) -> BoxRegion {
        let lo: Vec<f64> = (0..self.dim()).map(|a| self.origin(a) as f64 * self.eps).collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|a| (self.origin(a) + self.extents[a] as i64) as f64 * self.eps)
            .collect();
        BoxRegion::new(lo, hi)
    }

    pub fn site_count(&self) -> usize {
        self.values.len()
    }

    pub fn ones_count(&self) -> u64 {
        self.values.iter().map(|&v| v as u64).sum()
    }

    /// The field with both phases exchanged.
    pub fn flipped(&self) -> SpinField {
        let mut f = self.clone();
        for v in f.values.iter_mut() {
            *v = 1 - *v;
        }
        f
    }

    /// Advance an absolute cell index in row-major order; false when done.
    pub(crate) fn advance_cell(&self, cell: &mut [i64]) -> bool {
        for a in (0..self.dim()).rev() {
            cell[a] += 1;
            if cell[a] < self.origin(a) + self.extents[a] as i64 {
                return true;
            }
            cell[a] = self.origin(a);
        }
        false
    }

    /// Map an absolute cell to its stored representative, applying periodic
    /// wraps (with twists). Returns None if a restricted axis falls outside.
    pub(crate) fn wrap_cell(&self, cell: &[i64], out: &mut [i64]) -> Option<()> {
        out.copy_from_slice(cell);
        for a in 0..self.dim() {
            if let AxisBound::Periodic { twist } = &self.boundary[a] {
                let n = self.extents[a] as i64;
                let q = (out[a] - self.origin(a)).div_euclid(n);
                if q != 0 {
                    out[a] -= q * n;
                    for (b, &t) in twist.iter().enumerate() {
                        if t != 0 {
                            out[b] -= q * t;
                        }
                    }
                }
            }
        }
        for a in 0..self.dim() {
            if !self.boundary[a].is_periodic() {
                let rel = out[a] - self.origin(a);
                if rel < 0 || rel >= self.extents[a] as i64 {
                    return None;
                }
            }
        }
        Some(())
    }

    /// Storage index of an in-window cell (no wrapping).
    pub(crate) fn storage_index(&self, cell: &[i64], oi: usize) -> Option<usize> {
        let mut idx = 0usize;
        for a in 0..self.dim() {
            let rel = cell[a] - self.origin(a);
            if rel < 0 || rel >= self.extents[a] as i64 {
                return None;
            }
            idx = idx * self.extents[a] + rel as usize;
        }
        Some(idx * self.lattice.n_offsets() + oi)
    }

    /// Value at an absolute site, wrapping periodically as needed.
    pub fn value(&self, cell: &[i64], oi: usize) -> Result<u8> {
        if cell.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: cell.len() });
        }
        let mut wrapped = vec![0i64; self.dim()];
        self.wrap_cell(cell, &mut wrapped).ok_or(Error::OutsideWindow)?;
        let idx = self.storage_index(&wrapped, oi).ok_or(Error::OutsideWindow)?;
        Ok(self.values[idx])
    }

    /// Piecewise-constant interpolation: the value at the nearest site of the
    /// window, ties broken by lexicographically smallest site index.
    pub fn interpolate(&self, x: &[f64]) -> Result<u8> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let d = self.dim();
        let mut p = x.to_vec();
        // wrap periodic axes into the window box (twists shift other axes)
        for a in 0..d {
            if let AxisBound::Periodic { twist } = &self.boundary[a] {
                let lo = self.origin(a) as f64 * self.eps;
                let span = self.extents[a] as f64 * self.eps;
                let q = ((p[a] - lo) / span).floor();
                if q != 0.0 {
                    p[a] -= q * span;
                    for (b, &t) in twist.iter().enumerate() {
                        if t != 0 {
                            p[b] -= q * t as f64 * self.eps;
                        }
                    }
                }
            }
        }
        for a in 0..d {
            if !self.boundary[a].is_periodic() {
                let lo = self.origin(a) as f64 * self.eps;
                let hi = lo + self.extents[a] as f64 * self.eps;
                if !(lo <= p[a] && p[a] < hi) {
                    return Err(Error::OutsideWindow);
                }
            }
        }
        // nearest window site; candidates in lexicographic order so the
        // first strict minimum realizes the tie-break
        let base: Vec<i64> = p.iter().map(|c| (c / self.eps).floor() as i64).collect();
        let mut best_d2 = f64::INFINITY;
        let mut best_idx: Option<usize> = None;
        let mut delta = vec![-2i64; d];
        let mut cand = vec![0i64; d];
        let mut wrapped = vec![0i64; d];
        loop {
            for a in 0..d {
                cand[a] = base[a] + delta[a];
            }
            if self.wrap_cell(&cand, &mut wrapped).is_some() {
                for oi in 0..self.lattice.n_offsets() {
                    let off = &self.lattice.offsets()[oi];
                    let mut d2 = 0.0;
                    for a in 0..d {
                        let dx = p[a] - self.eps * (cand[a] as f64 + off[a]);
                        d2 += dx * dx;
                    }
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best_idx = self.storage_index(&wrapped, oi);
                    }
                }
            }
            let mut axis = d;
            let advanced = loop {
                if axis == 0 {
                    break false;
                }
                axis -= 1;
                if delta[axis] < 2 {
                    delta[axis] += 1;
                    for dd in delta[axis + 1..].iter_mut() {
                        *dd = -2;
                    }
                    break true;
                }
            };
            if !advanced {
                break;
            }
        }
        best_idx.map(|i| self.values[i]).ok_or(Error::OutsideWindow)
    }

    fn for_sites_in_region<F: FnMut(&[i64], usize, u8)>(&self, region: &BoxRegion, mut f: F) -> usize {
        let d = self.dim();
        let mut lo = vec![0i64; d];
        let mut hi = vec![0i64; d];
        for a in 0..d {
            // conservative cell range, clamped to the window
            let cl = (region.lo[a] / self.eps).floor() as i64 - 1;
            let ch = (region.hi[a] / self.eps).ceil() as i64 + 1;
            lo[a] = cl.max(self.origin(a));
            hi[a] = ch.min(self.origin(a) + self.extents[a] as i64 - 1);
            if lo[a] > hi[a] {
                return 0;
            }
        }
        let mut count = 0usize;
        let mut cell = lo.clone();
        let mut x = vec![0.0; d];
        'outer: loop {
            for oi in 0..self.lattice.n_offsets() {
                let off = &self.lattice.offsets()[oi];
                for a in 0..d {
                    x[a] = self.eps * (cell[a] as f64 + off[a]);
                }
                if region.contains(&x) {
                    let idx = self.storage_index(&cell, oi).unwrap();
                    f(&cell, oi, self.values[idx]);
                    count += 1;
                }
            }
            for a in (0..d).rev() {
                cell[a] += 1;
                if cell[a] <= hi[a] {
                    continue 'outer;
                }
                cell[a] = lo[a];
                if a == 0 {
                    break 'outer;
                }
            }
        }
        count
    }

    /// Mean of the field over sites inside the region.
    pub fn window_average(&self, region: &BoxRegion) -> Result<f64> {
        if region.lo.len() != self.dim() || region.hi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: region.lo.len() });
        }
        let mut ones = 0u64;
        let total = self.for_sites_in_region(region, |_, _, v| ones += v as u64);
        if total == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(ones as f64 / total as f64)
    }

    /// Discrete L1 distance to a target set over a region:
    /// `eps^d` times the number of sites where the field disagrees with the
    /// sampled indicator.
    pub fn l1_distance(&self, set: &TargetSet, region: &BoxRegion) -> Result<f64> {
        set.validate(self.dim())?;
        let eps = self.eps;
        let mut mismatches = 0u64;
        self.for_sites_in_region(region, |cell, oi, v| {
            let want = set.contains_site(cell, &self.lattice.offsets()[oi], eps) as u8;
            if want != v {
                mismatches += 1;
            }
        });
        Ok(eps.powi(self.dim() as i32) * mismatches as f64)
    }
}
