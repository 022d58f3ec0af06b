//! Periodic lattices with period 1 in every coordinate direction.
//!
//! Sites are `offset + z` for `z` in the integer lattice; the cubic lattice
//! has the single offset 0. Nearest-site assignment realizes the Voronoi-cell
//! piecewise-constant interpolation, with ties broken by lexicographically
//! smallest site index.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicLattice {
    dim: usize,
    offsets: Vec<Vec<f64>>,
}

impl PeriodicLattice {
    /// The cubic lattice Z^d.
    pub fn cubic(dim: usize) -> PeriodicLattice {
        PeriodicLattice { dim, offsets: vec![vec![0.0; dim]] }
    }

    /// A lattice with the given offsets in the half-open unit cell `[0,1)^d`.
    pub fn with_offsets(dim: usize, offsets: Vec<Vec<f64>>) -> Result<PeriodicLattice> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidLattice(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidLattice("at least one offset required".into()));
        }
        for o in &offsets {
            if o.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: o.len() });
            }
            if o.iter().any(|c| !(0.0..1.0).contains(c)) {
                return Err(Error::InvalidLattice(format!("offset {o:?} outside [0,1)^d")));
            }
        }
        for i in 0..offsets.len() {
            for j in i + 1..offsets.len() {
                if offsets[i] == offsets[j] {
                    return Err(Error::InvalidLattice(format!("duplicate offset {:?}", offsets[i])));
                }
            }
        }
        Ok(PeriodicLattice { dim, offsets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    pub fn is_cubic(&self) -> bool {
        self.offsets.len() == 1 && self.offsets[0].iter().all(|&c| c == 0.0)
    }

    /// Position of the site `(cell, offset_index)` in lattice coordinates.
    pub fn site_position(&self, cell: &[i64], offset_index: usize, out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = cell[a] as f64 + self.offsets[offset_index][a];
        }
    }

    /// Nearest lattice site to `x`, as `(cell, offset index)`.
    ///
    /// Candidates are scanned in lexicographic (cell, offset) order and the
    /// first strict minimum wins, which realizes the tie-break rule.
    pub fn nearest_site(&self, x: &[f64]) -> Result<(Vec<i64>, usize)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let base: Vec<i64> = x.iter().map(|c| c.floor() as i64).collect();
        let mut best_d2 = f64::INFINITY;
        let mut best: Option<(Vec<i64>, usize)> = None;
        // Chebyshev radius 2 covers every possible nearest site for d <= 3.
        let mut delta = vec![-2i64; self.dim];
        loop {
            let cell: Vec<i64> = base.iter().zip(&delta).map(|(b, d)| b + d).collect();
            for (oi, off) in self.offsets.iter().enumerate() {
                let mut d2 = 0.0;
                for a in 0..self.dim {
                    let dxa = x[a] - (cell[a] as f64 + off[a]);
                    d2 += dxa * dxa;
                }
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = Some((cell.clone(), oi));
                }
            }
            // advance delta in lexicographic order
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return Ok(best.unwrap());
                }
                axis -= 1;
                if delta[axis] < 2 {
                    delta[axis] += 1;
                    for d in delta[axis + 1..].iter_mut() {
                        *d = -2;
                    }
                    break;
                }
            }
        }
    }

    /// Monte Carlo estimate of the Voronoi cell volume of the given offset
    /// class, with its standard error. Uniform samples in the unit cell are
    /// classified by nearest site; by periodicity the class volume equals the
    /// assigned fraction of the cell.
    pub fn voronoi_volume_estimate(
        &self,
        offset_index: usize,
        samples: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        if offset_index >= self.offsets.len() {
            return Err(Error::InvalidLattice(format!(
                "offset index {offset_index} out of range ({} offsets)",
                self.offsets.len()
            )));
        }
        if samples < 10_000 {
            return Err(Error::Precondition(format!(
                "voronoi estimate needs at least 10^4 samples, got {samples}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        let mut x = vec![0.0; self.dim];
        for _ in 0..samples {
            for c in x.iter_mut() {
                *c = rng.gen::<f64>();
            }
            let (_, oi) = self.nearest_site(&x)?;
            if oi == offset_index {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        Ok((p, se))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_owns_the_whole_cell() {
        for d in 1..=3 {
            let l = PeriodicLattice::cubic(d);
            let (v, se) = l.voronoi_volume_estimate(0, 10_000, 7).unwrap();
            assert_eq!(v, 1.0);
            assert_eq!(se, 0.0);
        }
    }

    #[test]
    fn two_offset_lattice_bisects_the_cell() {
        let l = PeriodicLattice::with_offsets(2, vec![vec![0.0, 0.0], vec![0.5, 0.5]]).unwrap();
        // exact cell bisection by symmetry: each class owns 1/2
        let (v0, se0) = l.voronoi_volume_estimate(0, 40_000, 11).unwrap();
        let (v1, se1) = l.voronoi_volume_estimate(1, 40_000, 11).unwrap();
        assert!((v0 - 0.5).abs() < 4.0 * se0.max(1e-3), "{v0} +- {se0}");
        assert!((v1 - 0.5).abs() < 4.0 * se1.max(1e-3), "{v1} +- {se1}");
        // same seed, same samples: the two classes partition the cell
        assert!((v0 + v1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimates_partition_and_stay_in_bounds() {
        let l = PeriodicLattice::with_offsets(
            2,
            vec![vec![0.1, 0.2], vec![0.6, 0.1], vec![0.3, 0.8]],
        )
        .unwrap();
        let mut total = 0.0;
        for oi in 0..l.n_offsets() {
            let (v, _) = l.voronoi_volume_estimate(oi, 20_000, 3).unwrap();
            assert!(v > 0.0 && v <= 1.0);
            total += v;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_site_tie_breaks_lexicographically() {
        let l = PeriodicLattice::cubic(1);
        // x = 0.5 is equidistant from sites 0 and 1; lexicographically smaller wins
        let (cell, oi) = l.nearest_site(&[0.5]).unwrap();
        assert_eq!((cell, oi), (vec![0], 0));
        let (cell, _) = l.nearest_site(&[0.49]).unwrap();
        assert_eq!(cell, vec![0]);
        let (cell, _) = l.nearest_site(&[0.51]).unwrap();
        assert_eq!(cell, vec![1]);
    }

    #[test]
    fn offsets_validated() {
        assert!(PeriodicLattice::with_offsets(2, vec![]).is_err());
        assert!(PeriodicLattice::with_offsets(2, vec![vec![1.0, 0.0]]).is_err());
        assert!(PeriodicLattice::with_offsets(2, vec![vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(PeriodicLattice::with_offsets(2, vec![vec![0.0]]).is_err());
    }

    #[test]
    fn sample_count_precondition() {
        let l = PeriodicLattice::cubic(2);
        assert!(matches!(
            l.voronoi_volume_estimate(0, 100, 0),
            Err(Error::Precondition(_))
        ));
    }
}
