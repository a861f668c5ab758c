//! Linear function-approximation feature maps: full column rank, row norms
//! at most one, and optional zero rows for states outside an agent's
//! sub-space.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Feature matrix: one row per state (or state-action pair), one column per
/// feature.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub phi: DMatrix<f64>,
    zero_rows: Vec<usize>,
}

impl FeatureMap {
    /// Random Gaussian matrix, columns orthonormalized, rows rescaled so the
    /// largest row norm is exactly one, with the given rows zeroed for
    /// out-of-subspace states.
    pub fn random_orthonormal(
        n_rows: usize,
        n_features: usize,
        zero_rows: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let active = n_rows - zero_rows.len();
        if n_features == 0 || active < n_features {
            return Err(Error::InvalidParameter(format!(
                "{active} active rows cannot carry {n_features} independent features"
            )));
        }
        if zero_rows.iter().any(|&r| r >= n_rows) {
            return Err(Error::InvalidParameter("zero row index out of range".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = DMatrix::from_fn(active, n_features, |_, _| StandardNormal.sample(&mut rng));
        let q = gauss.qr().q();

        let mut phi = DMatrix::<f64>::zeros(n_rows, n_features);
        let mut src = 0;
        for r in 0..n_rows {
            if zero_rows.contains(&r) {
                continue;
            }
            for c in 0..n_features {
                phi[(r, c)] = q[(src, c)];
            }
            src += 1;
        }
        let map = FeatureMap {
            phi,
            zero_rows: zero_rows.to_vec(),
        }
        .rescaled();
        map.validate()?;
        Ok(map)
    }

    /// Indicator features: the identity, one feature per row.
    pub fn tabular(n_rows: usize) -> Self {
        FeatureMap {
            phi: DMatrix::identity(n_rows, n_rows),
            zero_rows: Vec::new(),
        }
    }

    /// Trigonometric basis columns (sin/cos at increasing frequencies),
    /// orthonormalized. Every column is orthogonal to the constant vector
    /// and row norms are balanced, which keeps the slow "constant" direction
    /// out of the feature span.
    pub fn trig_basis(n_rows: usize, n_features: usize) -> Result<Self> {
        if n_features == 0 || n_features >= n_rows {
            return Err(Error::InvalidParameter(format!(
                "trig basis supports 1..{} features on {n_rows} rows",
                n_rows.saturating_sub(1)
            )));
        }
        let mut raw = DMatrix::<f64>::zeros(n_rows, n_features);
        for c in 0..n_features {
            let freq = (c / 2 + 1) as f64;
            for r in 0..n_rows {
                let angle = 2.0 * std::f64::consts::PI * freq * r as f64 / n_rows as f64;
                raw[(r, c)] = if c % 2 == 0 { angle.cos() } else { angle.sin() };
            }
        }
        let q = raw.qr().q();
        let map = FeatureMap {
            phi: q,
            zero_rows: Vec::new(),
        }
        .rescaled();
        map.validate()?;
        Ok(map)
    }

    fn rescaled(mut self) -> Self {
        let max_row = (0..self.phi.nrows())
            .map(|r| self.phi.row(r).norm())
            .fold(0.0f64, f64::max);
        if max_row > 0.0 {
            self.phi /= max_row;
        }
        self
    }

    pub fn n_rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.phi.ncols()
    }

    pub fn row(&self, idx: usize) -> DVector<f64> {
        self.phi.row(idx).transpose()
    }

    /// Full column rank, row norms at most one, and declared zero rows
    /// actually zero.
    pub fn validate(&self) -> Result<()> {
        for r in 0..self.n_rows() {
            let norm = self.phi.row(r).norm();
            if norm > 1.0 + 1e-12 {
                return Err(Error::AssumptionFailed(format!(
                    "feature row {r} has norm {norm} > 1"
                )));
            }
        }
        for &r in &self.zero_rows {
            if self.phi.row(r).norm() != 0.0 {
                return Err(Error::AssumptionFailed(format!(
                    "row {r} declared out-of-subspace but nonzero"
                )));
            }
        }
        let svals = self.phi.clone().singular_values();
        let max_sv = svals.iter().fold(0.0f64, |a, &s| a.max(s));
        let rank = svals.iter().filter(|&&s| s > 1e-10 * max_sv.max(1.0)).count();
        if rank < self.n_features() {
            return Err(Error::AssumptionFailed(format!(
                "feature matrix rank {rank} below column count {}",
                self.n_features()
            )));
        }
        Ok(())
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.n_rows().to_le_bytes());
        hasher.update(self.n_features().to_le_bytes());
        for v in self.phi.iter() {
            hasher.update(v.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_orthonormal_invariants() {
        for seed in 0..5 {
            let map = FeatureMap::random_orthonormal(7, 3, &[], seed).unwrap();
            map.validate().unwrap();
            let max_row = (0..7).map(|r| map.phi.row(r).norm()).fold(0.0f64, f64::max);
            assert!((max_row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rows_respected() {
        let map = FeatureMap::random_orthonormal(6, 2, &[1, 4], 9).unwrap();
        assert_eq!(map.phi.row(1).norm(), 0.0);
        assert_eq!(map.phi.row(4).norm(), 0.0);
        map.validate().unwrap();
    }

    #[test]
    fn rank_deficiency_detected() {
        let mut phi = DMatrix::<f64>::zeros(4, 2);
        phi[(0, 0)] = 1.0;
        phi[(1, 0)] = 0.5;
        // Second column identical to the first: rank 1.
        phi[(0, 1)] = 1.0;
        phi[(1, 1)] = 0.5;
        let map = FeatureMap {
            phi: phi / 2.0,
            zero_rows: vec![],
        };
        assert!(map.validate().is_err());
    }

    #[test]
    fn tabular_is_identity() {
        let map = FeatureMap::tabular(3);
        map.validate().unwrap();
        assert_eq!(map.row(1), DVector::from_vec(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn trig_basis_orthogonal_to_constant() {
        let map = FeatureMap::trig_basis(5, 3).unwrap();
        map.validate().unwrap();
        let ones = DVector::from_element(5, 1.0);
        for c in 0..3 {
            let col = map.phi.column(c);
            assert!(col.dot(&ones).abs() < 1e-10, "column {c} not 1-orthogonal");
        }
    }
}
