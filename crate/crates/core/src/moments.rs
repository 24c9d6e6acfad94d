//! Streaming sample mean and covariance.
//!
//! Moments use the population (`1/N`) normalisation:
//! `μ̂ = (1/N) Σ aᵢ`, `Σ̂ = (1/N) Σ (aᵢ − μ̂)(aᵢ − μ̂)ᵀ`.
//! Updates follow the centred one-pass recurrence, so every update costs
//! `O(dim²)` (full) or `O(dim)` (diagonal) regardless of how many samples were
//! already absorbed.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::math::sqrt;
use crate::support::SupportSet;

/// Whether cross-covariances are tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    Full,
    /// Per-coordinate variances only; off-diagonal terms are taken as zero.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
enum Scatter {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

/// Streaming accumulator for sample count, mean and centred scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    count: u64,
    mean: DVector<f64>,
    scatter: Scatter,
}

/// Covariance estimate extracted from a [`MomentState`].
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Covariance {
    /// Dense covariance matrix (diagonal mode is expanded with zero cross terms).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(v) => DMatrix::from_diagonal(v),
        }
    }
}

/// Snapshot of the estimates held by a state with at least one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: DVector<f64>,
    pub covariance: Covariance,
}

impl Moments {
    /// `D̂` with `D̂ᵢᵢ = √σ̂²ᵢ`; available in diagonal mode only.
    pub fn std_dev_diag(&self) -> Option<DMatrix<f64>> {
        match &self.covariance {
            Covariance::Diagonal(v) => Some(DMatrix::from_diagonal(&v.map(|s| sqrt(s.max(0.0))))),
            Covariance::Full(_) => None,
        }
    }
}

impl MomentState {
    pub fn new(dim: usize, mode: CovarianceMode) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("moment state dimension must be at least 1"));
        }
        let scatter = match mode {
            CovarianceMode::Full => Scatter::Full(DMatrix::zeros(dim, dim)),
            CovarianceMode::Diagonal => Scatter::Diagonal(DVector::zeros(dim)),
        };
        Ok(Self { count: 0, mean: DVector::zeros(dim), scatter })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mode(&self) -> CovarianceMode {
        match self.scatter {
            Scatter::Full(_) => CovarianceMode::Full,
            Scatter::Diagonal(_) => CovarianceMode::Diagonal,
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn validate(&self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim() {
            return Err(invalid!(
                "sample has length {} but the state has dimension {}",
                sample.len(),
                self.dim()
            ));
        }
        if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("sample entry {i} is not finite"));
        }
        Ok(())
    }

    /// Absorb one sample.
    pub fn update(&mut self, sample: &[f64]) -> Result<()> {
        self.validate(sample)?;
        self.count += 1;
        let n = self.count as f64;
        let dim = self.dim();
        // delta = a − μ_old; μ_new = μ_old + delta/n; scatter += (n−1)/n · delta deltaᵀ
        let w = (n - 1.0) / n;
        match &mut self.scatter {
            Scatter::Full(m) => {
                let delta: alloc::vec::Vec<f64> =
                    sample.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
                for (m, d) in self.mean.iter_mut().zip(&delta) {
                    *m += d / n;
                }
                for j in 0..dim {
                    let dj = w * delta[j];
                    for i in j..dim {
                        m[(i, j)] += delta[i] * dj;
                    }
                }
                for j in 0..dim {
                    for i in (j + 1)..dim {
                        m[(j, i)] = m[(i, j)];
                    }
                }
            }
            Scatter::Diagonal(v) => {
                for i in 0..dim {
                    let d = sample[i] - self.mean[i];
                    self.mean[i] += d / n;
                    v[i] += w * d * d;
                }
            }
        }
        Ok(())
    }

    /// Absorb `sample` only when it lies in `support`; returns whether it was accepted.
    pub fn update_filtered(&mut self, sample: &[f64], support: &SupportSet) -> Result<bool> {
        self.validate(sample)?;
        if support.contains(sample)? {
            self.update(sample)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Combine two states as if one had been fed both sample streams.
    pub fn merge(&self, other: &MomentState) -> Result<MomentState> {
        if self.dim() != other.dim() || self.mode() != other.mode() {
            return Err(invalid!("cannot merge moment states of different dimension or mode"));
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        let mean = &self.mean + &delta * (nb / n);
        let w = na * nb / n;
        let scatter = match (&self.scatter, &other.scatter) {
            (Scatter::Full(a), Scatter::Full(b)) => Scatter::Full(a + b + &delta * delta.transpose() * w),
            (Scatter::Diagonal(a), Scatter::Diagonal(b)) => {
                Scatter::Diagonal(a + b + delta.component_mul(&delta) * w)
            }
            _ => unreachable!("modes checked above"),
        };
        Ok(MomentState { count: self.count + other.count, mean, scatter })
    }

    /// Current estimates. Fails on an empty state.
    pub fn extract(&self) -> Result<Moments> {
        if self.count == 0 {
            return Err(Error::EmptyState);
        }
        let n = self.count as f64;
        let covariance = match &self.scatter {
            Scatter::Full(m) => Covariance::Full(m / n),
            Scatter::Diagonal(v) => Covariance::Diagonal(v / n),
        };
        Ok(Moments { count: self.count, mean: self.mean.clone(), covariance })
    }

    /// Feed every row of a batch.
    pub fn extend<'a, I>(&mut self, samples: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        samples.into_iter().try_for_each(|s| self.update(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(samples: &[alloc::vec::Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let dim = samples[0].len();
        let n = samples.len() as f64;
        let mut mean = DVector::zeros(dim);
        for s in samples {
            mean += DVector::from_column_slice(s);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(dim, dim);
        for s in samples {
            let d = DVector::from_column_slice(s) - &mean;
            cov += &d * d.transpose();
        }
        (mean, cov / n)
    }

    #[test]
    fn new_state_is_empty() {
        let s = MomentState::new(2, CovarianceMode::Full).unwrap();
        assert_eq!(s.count(), 0);
        assert_eq!(s.mean().as_slice(), &[0.0, 0.0]);
        let d = MomentState::new(1, CovarianceMode::Diagonal).unwrap();
        assert_eq!(d.count(), 0);
        assert!(matches!(
            MomentState::new(0, CovarianceMode::Full),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn two_point_case() {
        let mut s = MomentState::new(2, CovarianceMode::Full).unwrap();
        s.update(&[0.0, 0.0]).unwrap();
        s.update(&[2.0, 2.0]).unwrap();
        let m = s.extract().unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(m.covariance.to_matrix(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn single_sample_has_zero_scatter() {
        let mut s = MomentState::new(1, CovarianceMode::Full).unwrap();
        s.update(&[5.0]).unwrap();
        let m = s.extract().unwrap();
        assert_eq!(m.mean[0], 5.0);
        assert_eq!(m.covariance.to_matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_bad_samples() {
        let mut s = MomentState::new(2, CovarianceMode::Full).unwrap();
        assert!(s.update(&[1.0]).is_err());
        assert!(s.update(&[1.0, f64::NAN]).is_err());
        assert!(s.update(&[f64::INFINITY, 0.0]).is_err());
        assert_eq!(s.count(), 0);
        assert_eq!(s.extract(), Err(Error::EmptyState));
    }

    #[test]
    fn diagonal_extract_gives_d_hat() {
        let mut s = MomentState::new(1, CovarianceMode::Diagonal).unwrap();
        s.update(&[1.0]).unwrap();
        s.update(&[3.0]).unwrap();
        let m = s.extract().unwrap();
        assert_eq!(m.covariance, Covariance::Diagonal(DVector::from_element(1, 1.0)));
        assert_eq!(m.std_dev_diag().unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn streaming_matches_two_pass_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: alloc::vec::Vec<alloc::vec::Vec<f64>> = (0..1000)
            .map(|_| (0..3).map(|_| 1e3 + rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut s = MomentState::new(3, CovarianceMode::Full).unwrap();
        s.extend(samples.iter().map(|v| v.as_slice())).unwrap();
        let (mean, cov) = batch(&samples);
        let m = s.extract().unwrap();
        assert_relative_eq!(m.mean, mean, max_relative = 1e-10);
        assert_relative_eq!(m.covariance.to_matrix(), cov, max_relative = 1e-10);
    }

    #[test]
    fn merge_identity_and_two_point() {
        let mut a = MomentState::new(2, CovarianceMode::Full).unwrap();
        a.update(&[0.0, 0.0]).unwrap();
        let empty = MomentState::new(2, CovarianceMode::Full).unwrap();
        assert_eq!(a.merge(&empty).unwrap(), a);
        let mut b = MomentState::new(2, CovarianceMode::Full).unwrap();
        b.update(&[2.0, 2.0]).unwrap();
        let m = a.merge(&b).unwrap().extract().unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 1.0]);
        let d = MomentState::new(2, CovarianceMode::Diagonal).unwrap();
        assert!(a.merge(&d).is_err());
        let wrong_dim = MomentState::new(3, CovarianceMode::Full).unwrap();
        assert!(a.merge(&wrong_dim).is_err());
    }

    #[test]
    fn merge_matches_single_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [CovarianceMode::Full, CovarianceMode::Diagonal] {
            let samples: alloc::vec::Vec<[f64; 2]> =
                (0..500).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(0.0..1.0)]).collect();
            let split = rng.gen_range(1..499);
            let mut whole = MomentState::new(2, mode).unwrap();
            let mut left = MomentState::new(2, mode).unwrap();
            let mut right = MomentState::new(2, mode).unwrap();
            for (i, s) in samples.iter().enumerate() {
                whole.update(s).unwrap();
                if i < split { left.update(s).unwrap() } else { right.update(s).unwrap() }
            }
            let merged = left.merge(&right).unwrap().extract().unwrap();
            let single = whole.extract().unwrap();
            assert_eq!(merged.count, single.count);
            assert_relative_eq!(merged.mean, single.mean, max_relative = 1e-10);
            assert_relative_eq!(
                merged.covariance.to_matrix(),
                single.covariance.to_matrix(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn filtered_update_respects_closed_box() {
        let support = SupportSet::boxed(&[0.0], &[1.0]).unwrap();
        let mut s = MomentState::new(1, CovarianceMode::Full).unwrap();
        assert!(s.update_filtered(&[0.5], &support).unwrap());
        assert_eq!(s.count(), 1);
        let before = s.clone();
        assert!(!s.update_filtered(&[2.0], &support).unwrap());
        assert_eq!(s, before);
        assert!(s.update_filtered(&[1.0], &support).unwrap());
        assert_eq!(s.count(), 2);
        assert!(s.update_filtered(&[1.0, 2.0], &support).is_err());
    }
}
