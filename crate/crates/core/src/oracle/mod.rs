//! Band oracles: the sorted band values λ₁ ≤ … ≤ λ_L at a wave vector, with
//! their k-gradients.

mod empty_lattice;
mod pwe;

pub use empty_lattice::{
    empty_lattice_singular_set, Aabb, DegeneracyPlane, EmptyLattice, PlaneHit,
};
pub use pwe::{PlaneWaveOracle, PweConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::WaveVector;

/// Relative tolerance below which slightly negative eigenvalues are clipped to zero.
pub const NEGATIVE_CLIP: f64 = 1e-10;

/// Band values and gradients at one wave vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
}

impl BandSample {
    /// Value of band `q` (1-based).
    pub fn value(&self, q: usize) -> f64 {
        self.values[q - 1]
    }

    /// Gradient of band `q` (1-based).
    pub fn gradient(&self, q: usize) -> [f64; 3] {
        self.gradients[q - 1]
    }

    pub fn is_sorted(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Descriptive metadata recorded alongside every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub name: String,
    pub cutoff: usize,
    pub max_bands: usize,
    pub lattice_constant: f64,
}

/// A deterministic source of sorted band values.
///
/// Implementations must return bitwise-identical output for identical
/// arguments and must be callable from several threads at once.
pub trait BandOracle: Send + Sync {
    fn info(&self) -> OracleInfo;

    /// The `n_bands` smallest band values at `k`, sorted.
    fn values(&self, k: WaveVector, n_bands: usize) -> Result<Vec<f64>>;

    /// Values and gradients of the first `n_bands` bands.
    fn sample(&self, k: WaveVector, n_bands: usize) -> Result<BandSample>;

    fn max_bands(&self) -> usize {
        self.info().max_bands
    }
}

impl<T: BandOracle + ?Sized> BandOracle for &T {
    fn info(&self) -> OracleInfo {
        (**self).info()
    }
    fn values(&self, k: WaveVector, n_bands: usize) -> Result<Vec<f64>> {
        (**self).values(k, n_bands)
    }
    fn sample(&self, k: WaveVector, n_bands: usize) -> Result<BandSample> {
        (**self).sample(k, n_bands)
    }
}

impl<T: BandOracle + ?Sized> BandOracle for Box<T> {
    fn info(&self) -> OracleInfo {
        (**self).info()
    }
    fn values(&self, k: WaveVector, n_bands: usize) -> Result<Vec<f64>> {
        (**self).values(k, n_bands)
    }
    fn sample(&self, k: WaveVector, n_bands: usize) -> Result<BandSample> {
        (**self).sample(k, n_bands)
    }
}

/// Second-order central differences of every band, matched by sorted index.
pub fn central_difference_gradients<F>(values: F, k: WaveVector, n_bands: usize, step: f64) -> Result<Vec<[f64; 3]>>
where
    F: Fn(WaveVector) -> Result<Vec<f64>>,
{
    let mut grads = vec![[0.0; 3]; n_bands];
    for axis in 0..3 {
        let mut kp = k;
        let mut km = k;
        kp[axis] += step;
        km[axis] -= step;
        let vp = values(kp)?;
        let vm = values(km)?;
        for q in 0..n_bands {
            grads[q][axis] = (vp[q] - vm[q]) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// Clip eigenvalues that are negative only by round-off; reject the rest.
pub(crate) fn clip_negative(values: &mut [f64], scale: f64) -> Result<()> {
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v >= -NEGATIVE_CLIP * scale {
                *v = 0.0;
            } else {
                return Err(Error::Numerical(format!(
                    "negative eigenvalue {v:.3e} (scale {scale:.3e})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_band_count(requested: usize, available: usize) -> Result<()> {
    if requested == 0 || requested > available {
        return Err(Error::Config(format!(
            "requested {requested} bands but the oracle provides at most {available}"
        )));
    }
    Ok(())
}
