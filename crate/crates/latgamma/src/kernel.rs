//! Interaction profiles `a(ξ)` and their continuum functionals.
//!
//! A kernel is a nonnegative radial profile with bounded support. The surface
//! tension it induces on an interface with unit normal `ν` is
//!
//! ```text
//!   phi(ν) = ∫ a(ξ) |<ξ, ν>| dξ,
//! ```
//!
//! approximated here by a midpoint rule on a symmetric uniform grid. For
//! radial profiles phi is direction-independent and the limit energy is
//! `sigma · Per(A)` with `sigma = phi(e_1)`.

use crate::error::{Error, Result};
use crate::util::dot;

/// Built-in radial profile shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// Indicator of the open ball of the given radius.
    BallIndicator { radius: f64 },
    /// `exp(-rate * |ξ|)` truncated to the open ball of radius `cutoff`.
    TruncatedExponential { rate: f64, cutoff: f64 },
    /// Piecewise-linear interpolation of `(radius, value)` samples,
    /// zero from the last sample radius outward.
    Tabulated { samples: Vec<(f64, f64)> },
}

/// An interaction profile together with its dimension, support radius and
/// lower-bound certificate `(c_0, r_0)`: `a(ξ) >= c_0` whenever `|ξ| <= r_0`.
///
/// Kernels are immutable; all operations are pure.
#[derive(Debug, Clone)]
pub struct Kernel {
    dim: usize,
    profile: KernelProfile,
    support_radius: f64,
    certificate: Option<(f64, f64)>,
    scale: f64,
}

/// Midpoint-rule grid: uniform spacing over `[-half_extent, half_extent]^d`.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub spacing: f64,
    pub half_extent: f64,
}

impl QuadratureSpec {
    pub fn new(spacing: f64, half_extent: f64) -> Self {
        QuadratureSpec { spacing, half_extent }
    }

    /// Default grid: `support/256` for d <= 2, `support/64` for d = 3,
    /// box equal to the support.
    pub fn default_for(kernel: &Kernel) -> Self {
        let s = kernel.support_radius();
        let div = if kernel.dim() <= 2 { 256.0 } else { 64.0 };
        QuadratureSpec { spacing: s / div, half_extent: s }
    }

    /// Number of cells per axis and the effective spacing.
    fn grid(&self) -> (usize, f64) {
        let n = ((2.0 * self.half_extent / self.spacing).round() as usize).max(1);
        (n, 2.0 * self.half_extent / n as f64)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("dimension must be 1, 2 or 3, got {dim}")))
    }
}

impl Kernel {
    /// Indicator of the open ball `|ξ| < radius`.
    pub fn ball(dim: usize, radius: f64) -> Result<Kernel> {
        check_dim(dim)?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidKernel(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Kernel {
            dim,
            profile: KernelProfile::BallIndicator { radius },
            support_radius: radius,
            certificate: Some((1.0, radius / 2.0)),
            scale: 1.0,
        })
    }

    pub fn truncated_exponential(dim: usize, rate: f64, cutoff: f64) -> Result<Kernel> {
        check_dim(dim)?;
        if !(rate > 0.0) || !(cutoff > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "truncated exponential needs positive rate and cutoff, got rate={rate} cutoff={cutoff}"
            )));
        }
        let r0 = cutoff / 2.0;
        Ok(Kernel {
            dim,
            profile: KernelProfile::TruncatedExponential { rate, cutoff },
            support_radius: cutoff,
            certificate: Some(((-rate * r0).exp(), r0)),
            scale: 1.0,
        })
    }

    /// Tabulated radial profile. Samples must start at radius 0, have strictly
    /// increasing radii and nonnegative finite values.
    pub fn tabulated(dim: usize, samples: Vec<(f64, f64)>) -> Result<Kernel> {
        check_dim(dim)?;
        if samples.is_empty() {
            return Err(Error::InvalidKernel("tabulated profile needs at least one sample".into()));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::InvalidKernel("tabulated profile must start at radius 0".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidKernel("tabulated radii must be strictly increasing".into()));
            }
        }
        if samples.iter().any(|&(r, v)| !r.is_finite() || !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidKernel("tabulated values must be finite and nonnegative".into()));
        }
        let support = samples.last().unwrap().0.max(f64::MIN_POSITIVE);
        // Derived certificate: largest c0 valid on [0, support/2]; degenerate
        // profiles (e.g. identically zero) get none and validate() warns.
        let r0 = support / 2.0;
        let mut c0 = f64::INFINITY;
        let probes = 257;
        for i in 0..probes {
            let r = r0 * i as f64 / (probes - 1) as f64;
            c0 = c0.min(interp_table(&samples, r));
        }
        let certificate = if c0 > 0.0 { Some((c0, r0)) } else { None };
        Ok(Kernel {
            dim,
            profile: KernelProfile::Tabulated { samples },
            support_radius: support,
            certificate,
            scale: 1.0,
        })
    }

    /// Replace the lower-bound certificate, checking it against sampled radii.
    pub fn with_certificate(mut self, c0: f64, r0: f64) -> Result<Kernel> {
        if !(c0 > 0.0) || !(r0 > 0.0) {
            return Err(Error::InvalidKernel("certificate (c0, r0) must be positive".into()));
        }
        let probes = 257;
        for i in 0..probes {
            let r = r0 * i as f64 / (probes - 1) as f64;
            if self.eval_radial(r) < c0 {
                return Err(Error::InvalidKernel(format!(
                    "certificate violated: a({r}) = {} < c0 = {c0}",
                    self.eval_radial(r)
                )));
            }
        }
        self.certificate = Some((c0, r0));
        Ok(self)
    }

    /// Multiply the profile by `t > 0`. Used by linearity checks; the induced
    /// phi scales by exactly the same factor.
    pub fn scaled(&self, t: f64) -> Result<Kernel> {
        if !(t > 0.0) {
            return Err(Error::InvalidKernel(format!("scale factor must be positive, got {t}")));
        }
        let mut k = self.clone();
        k.scale *= t;
        k.certificate = k.certificate.map(|(c0, r0)| (c0 * t, r0));
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn certificate(&self) -> Option<(f64, f64)> {
        self.certificate
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    /// All built-in profiles are radial.
    pub fn is_radial(&self) -> bool {
        true
    }

    /// Multiplicative factor applied on top of the profile (see [`Kernel::scaled`]).
    pub fn scale_factor(&self) -> f64 {
        self.scale
    }

    /// Profile value at radius `r >= 0`.
    pub fn eval_radial(&self, r: f64) -> f64 {
        if r >= self.support_radius {
            return 0.0;
        }
        let raw = match &self.profile {
            KernelProfile::BallIndicator { radius } => {
                if r < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            KernelProfile::TruncatedExponential { rate, cutoff } => {
                if r < *cutoff {
                    (-rate * r).exp()
                } else {
                    0.0
                }
            }
            KernelProfile::Tabulated { samples } => interp_table(samples, r),
        };
        self.scale * raw
    }

    /// Profile value at a point.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: xi.len() });
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("kernel argument must be finite".into()));
        }
        Ok(self.eval_radial(crate::util::norm(xi)))
    }

    /// Sanity checks that are warnings rather than hard errors.
    pub fn validate(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.certificate.is_none() {
            warnings.push(
                "kernel has no positive lower-bound certificate (c0, r0); \
                 coerciveness of the scaled energies is not guaranteed"
                    .to_string(),
            );
        }
        warnings
    }

    /// Midpoint-rule approximation of `∫ a(ξ) |<ξ, ν>| dξ`.
    pub fn phi(&self, nu: &[f64], q: &QuadratureSpec) -> Result<f64> {
        if nu.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: nu.len() });
        }
        let n = crate::util::norm(nu);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::NotUnitDirection { norm: n });
        }
        self.quadrature(q, |x, r| self.eval_radial(r) * dot(x, nu).abs())
    }

    /// For radial profiles the limit energy is `sigma * Per(A)`; `sigma`
    /// equals phi in any direction, evaluated here along `e_1`.
    pub fn sigma_radial(&self, q: &QuadratureSpec) -> Result<f64> {
        if !self.is_radial() {
            return Err(Error::NonRadialKernel);
        }
        let mut e1 = vec![0.0; self.dim];
        e1[0] = 1.0;
        self.phi(&e1, q)
    }

    /// Midpoint value of `∫ a(ξ) |ξ| dξ`, the first-moment integral that
    /// bounds interaction tails.
    pub fn first_moment(&self, q: &QuadratureSpec) -> Result<f64> {
        self.quadrature(q, |_, r| self.eval_radial(r) * r)
    }

    fn quadrature(&self, q: &QuadratureSpec, integrand: impl Fn(&[f64], f64) -> f64) -> Result<f64> {
        if q.half_extent < self.support_radius {
            return Err(Error::QuadratureBoxTooSmall {
                half_extent: q.half_extent,
                support: self.support_radius,
            });
        }
        if !(q.spacing > 0.0) {
            return Err(Error::Precondition("quadrature spacing must be positive".into()));
        }
        let (n, h) = q.grid();
        let l = q.half_extent;
        let cell = h.powi(self.dim as i32);
        let center = |i: usize| -l + (i as f64 + 0.5) * h;
        let mut acc = 0.0;
        let mut x = vec![0.0; self.dim];
        match self.dim {
            1 => {
                for i in 0..n {
                    x[0] = center(i);
                    acc += integrand(&x, x[0].abs());
                }
            }
            2 => {
                for i in 0..n {
                    x[0] = center(i);
                    for j in 0..n {
                        x[1] = center(j);
                        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                        acc += integrand(&x, r);
                    }
                }
            }
            3 => {
                for i in 0..n {
                    x[0] = center(i);
                    for j in 0..n {
                        x[1] = center(j);
                        for k in 0..n {
                            x[2] = center(k);
                            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                            acc += integrand(&x, r);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(acc * cell)
    }
}

fn interp_table(samples: &[(f64, f64)], r: f64) -> f64 {
    let last = samples.last().unwrap();
    if r >= last.0 {
        return 0.0;
    }
    match samples.binary_search_by(|&(sr, _)| sr.partial_cmp(&r).unwrap()) {
        Ok(i) => samples[i].1,
        Err(i) => {
            // i >= 1 because samples start at radius 0 and r >= 0
            let (r0, v0) = samples[i - 1];
            let (r1, v1) = samples[i];
            let t = (r - r0) / (r1 - r0);
            v0 + t * (v1 - v0)
        }
    }
}

/// Deterministic spread of unit directions used by isotropy checks and the
/// `phi` tabulation: signs in 1D, equispaced angles in 2D, a golden-angle
/// spiral in 3D.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let th = golden * i as f64;
                    let v = vec![rho * th.cos(), rho * th.sin(), z];
                    let n = crate::util::norm(&v);
                    v.into_iter().map(|c| c / n).collect()
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1(d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    }

    #[test]
    fn ball_eval_examples() {
        let k = Kernel::ball(2, 1.0).unwrap();
        assert_eq!(k.eval(&[0.5, 0.0]).unwrap(), 1.0);
        assert_eq!(k.eval(&[2.0, 0.0]).unwrap(), 0.0);
        // open-ball convention: the boundary is outside
        let k1 = Kernel::ball(1, 1.0).unwrap();
        assert_eq!(k1.eval(&[1.0]).unwrap(), 0.0);
        assert!(matches!(k1.eval(&[1.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn phi_closed_forms() {
        // analytic: d=1 integral of |x| over (-1,1) = 1
        let k1 = Kernel::ball(1, 1.0).unwrap();
        let q1 = QuadratureSpec::default_for(&k1);
        let v1 = k1.phi(&[1.0], &q1).unwrap();
        assert!((v1 - 1.0).abs() < 1e-3, "{v1}");

        // polar closed form: ∫_0^1 ∫_0^2π r^2 |cos θ| dθ dr = 4/3
        let k2 = Kernel::ball(2, 1.0).unwrap();
        let q2 = QuadratureSpec::default_for(&k2);
        let v2 = k2.phi(&e1(2), &q2).unwrap();
        assert!((v2 - 4.0 / 3.0).abs() / (4.0 / 3.0) < 1e-2, "{v2}");

        // slice closed form: 2π ∫_0^1 x (1-x^2)/2 ... = π/2
        let k3 = Kernel::ball(3, 1.0).unwrap();
        let q3 = QuadratureSpec::default_for(&k3);
        let v3 = k3.phi(&e1(3), &q3).unwrap();
        let t3 = std::f64::consts::FRAC_PI_2;
        assert!((v3 - t3).abs() / t3 < 1e-2, "{v3}");
    }

    #[test]
    fn sigma_radial_examples() {
        let k2 = Kernel::ball(2, 1.0).unwrap();
        let q2 = QuadratureSpec::default_for(&k2);
        let s = k2.sigma_radial(&q2).unwrap();
        assert!((s - 4.0 / 3.0).abs() / (4.0 / 3.0) < 1e-2);

        let k1 = Kernel::ball(1, 1.0).unwrap();
        let q1 = QuadratureSpec::default_for(&k1);
        assert!((k1.sigma_radial(&q1).unwrap() - 1.0).abs() < 1e-3);

        // identically-zero table: sigma 0, no certificate, warned
        let kz = Kernel::tabulated(2, vec![(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let qz = QuadratureSpec::default_for(&kz);
        assert_eq!(kz.sigma_radial(&qz).unwrap(), 0.0);
        assert!(kz.certificate().is_none());
        assert_eq!(kz.validate().len(), 1);
    }

    #[test]
    fn first_moment_examples() {
        let k1 = Kernel::ball(1, 1.0).unwrap();
        let q1 = QuadratureSpec::default_for(&k1);
        assert!((k1.first_moment(&q1).unwrap() - 1.0).abs() < 1e-3);

        // polar form: ∫_0^1 r · 2πr dr = 2π/3 (direct quadrature oracle)
        let k2 = Kernel::ball(2, 1.0).unwrap();
        let q2 = QuadratureSpec::default_for(&k2);
        let fm = k2.first_moment(&q2).unwrap();
        let target = 2.0 * std::f64::consts::PI / 3.0;
        assert!((fm - target).abs() / target < 1e-2, "{fm}");

        let kz = Kernel::tabulated(1, vec![(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let qz = QuadratureSpec::default_for(&kz);
        assert_eq!(kz.first_moment(&qz).unwrap(), 0.0);
    }

    #[test]
    fn isotropy_within_one_percent() {
        let k = Kernel::ball(2, 1.0).unwrap();
        let q = QuadratureSpec::new(k.support_radius() / 256.0, k.support_radius());
        let dirs = unit_directions(2, 16);
        let base = k.phi(&dirs[0], &q).unwrap();
        let worst = dirs
            .iter()
            .map(|nu| (k.phi(nu, &q).unwrap() - base).abs() / base)
            .fold(0.0f64, f64::max);
        assert!(worst <= 0.01, "isotropy spread {worst}");
    }

    #[test]
    fn phi_symmetry_is_exact() {
        let k = Kernel::ball(2, 1.0).unwrap();
        let q = QuadratureSpec::new(1.0 / 64.0, 1.0);
        for nu in unit_directions(2, 7) {
            let neg: Vec<f64> = nu.iter().map(|c| -c).collect();
            assert_eq!(k.phi(&nu, &q).unwrap(), k.phi(&neg, &q).unwrap());
        }
    }

    #[test]
    fn phi_scales_linearly_with_profile() {
        let k = Kernel::ball(2, 1.0).unwrap();
        let q = QuadratureSpec::new(1.0 / 64.0, 1.0);
        let base = k.phi(&e1(2), &q).unwrap();
        // power-of-two factor: exact in floating point
        let k2 = k.scaled(2.0).unwrap();
        assert_eq!(k2.phi(&e1(2), &q).unwrap(), 2.0 * base);
        let kh = k.scaled(0.25).unwrap();
        assert_eq!(kh.phi(&e1(2), &q).unwrap(), 0.25 * base);
        let k3 = k.scaled(3.0).unwrap();
        assert!((k3.phi(&e1(2), &q).unwrap() - 3.0 * base).abs() < 1e-13 * base);
    }

    #[test]
    fn refinement_is_first_order_for_the_indicator() {
        // Boundary-cell error of the discontinuous integrand fluctuates with
        // grid/circle resonances; this chain was chosen so each halving lands
        // in the first-order band.
        let k = Kernel::ball(2, 1.0).unwrap();
        let target = 4.0 / 3.0;
        let errs: Vec<f64> = (0..4)
            .map(|i| {
                let n = 22usize << i;
                let q = QuadratureSpec::new(2.0 / n as f64, 1.0);
                (k.phi(&e1(2), &q).unwrap() - target).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.5..=3.0).contains(&ratio), "ratio {ratio} errs {errs:?}");
        }
    }

    #[test]
    fn truncated_exponential_and_table_agree() {
        let k = Kernel::truncated_exponential(1, 2.0, 1.0).unwrap();
        assert!((k.eval(&[0.25]).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(k.eval(&[1.5]).unwrap(), 0.0);

        // a table sampling the same profile interpolates close to it
        let samples: Vec<(f64, f64)> =
            (0..=64).map(|i| (i as f64 / 64.0, (-2.0 * i as f64 / 64.0).exp())).collect();
        let kt = Kernel::tabulated(1, samples).unwrap();
        for i in 0..40 {
            let r = 0.9 * i as f64 / 40.0;
            assert!((kt.eval_radial(r) - k.eval_radial(r)).abs() < 1e-3);
        }
        assert!(kt.certificate().is_some());
    }

    #[test]
    fn quadrature_box_must_cover_support() {
        let k = Kernel::ball(2, 1.0).unwrap();
        let q = QuadratureSpec::new(1.0 / 64.0, 0.5);
        assert!(matches!(k.phi(&e1(2), &q), Err(Error::QuadratureBoxTooSmall { .. })));
    }

    #[test]
    fn certificate_checks() {
        let k = Kernel::ball(2, 1.0).unwrap();
        assert!(k.clone().with_certificate(1.0, 0.9).is_ok());
        // the open ball drops to zero at radius 1, so r0 = 1 must fail
        assert!(k.with_certificate(1.0, 1.0).is_err());
    }
}
