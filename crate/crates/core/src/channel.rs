//! Rayleigh MIMO channel, ordered SVD and the eigen-domain observation model.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, CMatrix};
use crate::rng::complex_gaussian;

/// Antenna configuration and noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimoConfig {
    pub n_t: usize,
    pub n_r: usize,
    /// Noise spectral density (linear).
    pub n0: f64,
    /// `P_t / N_0` in dB.
    pub snr_db: f64,
}

impl MimoConfig {
    /// Configuration whose noise level realises `snr_db` for total transmit
    /// power `total_power`.
    pub fn from_snr_db(n_t: usize, n_r: usize, snr_db: f64, total_power: f64) -> Result<Self> {
        let cfg = Self { n_t, n_r, n0: total_power / 10f64.powf(snr_db / 10.0), snr_db };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of eigen-channels, `min(n_t, n_r)`.
    pub fn n(&self) -> usize {
        self.n_t.min(self.n_r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err(Error::InvalidInput("antenna counts must be at least 1".into()));
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level must be positive, got {}", self.n0)));
        }
        Ok(())
    }
}

/// One draw of the `n_r x n_t` channel matrix.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
}

/// Ordered eigen-decomposition of a channel: `lambdas` are the eigenvalues of
/// `H^H H` (or `H H^H`) in decreasing order, with the matching left and right
/// singular vectors.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub lambdas: Vec<f64>,
    pub u_bar: CMatrix,
    pub v_bar: CMatrix,
}

impl EigenSpectrum {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }
}

/// Draws `H` with i.i.d. CN(0, 1) entries.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &MimoConfig, rng: &mut R) -> ChannelRealization {
    ChannelRealization { h: CMatrix::from_fn(cfg.n_r, cfg.n_t, |_, _| complex_gaussian(rng, 1.0)) }
}

pub fn svd_ordered(ch: &ChannelRealization) -> Result<EigenSpectrum> {
    let svd = jacobi_svd(&ch.h)?;
    Ok(EigenSpectrum {
        lambdas: svd.sigma.iter().map(|s| s * s).collect(),
        u_bar: svd.u,
        v_bar: svd.v,
    })
}

/// Post-processed observation `z_m = sqrt(lambda_m) s_m + n'_m` drawn directly
/// in the eigen-domain.
pub fn observe<R: Rng + ?Sized>(spec: &EigenSpectrum, s: &[Complex64], n0: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    let noise: Vec<Complex64> = (0..spec.n()).map(|_| complex_gaussian(rng, n0)).collect();
    observe_with_noise(spec, s, &noise)
}

/// Eigen-domain observation with caller-supplied (already rotated) noise.
pub fn observe_with_noise(spec: &EigenSpectrum, s: &[Complex64], noise: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = spec.n();
    if s.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s.len() });
    }
    if noise.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: noise.len() });
    }
    Ok(spec
        .lambdas
        .iter()
        .zip(s)
        .zip(noise)
        .map(|((l, x), w)| x * l.sqrt() + w)
        .collect())
}

/// Full signal path: `x = V s`, `y = H x + n`, `z = U^H y`, with receive-side
/// noise `noise` of length `n_r`.
pub fn observe_full_path(
    ch: &ChannelRealization,
    spec: &EigenSpectrum,
    s: &[Complex64],
    noise: &[Complex64],
) -> Result<Vec<Complex64>> {
    if s.len() != spec.n() {
        return Err(Error::DimensionMismatch { expected: spec.n(), got: s.len() });
    }
    if noise.len() != ch.h.rows() {
        return Err(Error::DimensionMismatch { expected: ch.h.rows(), got: noise.len() });
    }
    let x = spec.v_bar.matvec(s)?;
    let mut y = ch.h.matvec(&x)?;
    for (yi, ni) in y.iter_mut().zip(noise) {
        *yi += ni;
    }
    spec.u_bar.adjoint().matvec(&y)
}

/// Ordered eigenvalues of one fresh channel draw; the cheap path used by the
/// Monte Carlo loops.
pub fn sample_spectrum<R: Rng + ?Sized>(cfg: &MimoConfig, rng: &mut R) -> Result<Vec<f64>> {
    Ok(svd_ordered(&sample_channel(cfg, rng))?.lambdas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = MimoConfig::from_snr_db(3, 2, 10.0, 1.0).unwrap();
        let a = sample_channel(&cfg, &mut stream(5, &[1]));
        let b = sample_channel(&cfg, &mut stream(5, &[1]));
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn diagonal_channel() {
        let ch = ChannelRealization { h: CMatrix::diag_real(&[2.0, 1.0]) };
        let spec = svd_ordered(&ch).unwrap();
        assert!((spec.lambdas[0] - 4.0).abs() < 1e-12);
        assert!((spec.lambdas[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_is_transparent() {
        let ch = ChannelRealization { h: CMatrix::identity(3) };
        let spec = svd_ordered(&ch).unwrap();
        assert!(spec.lambdas.iter().all(|l| (l - 1.0).abs() < 1e-12));
        let s = vec![Complex64::new(1.0, -1.0), c(0.5), Complex64::new(0.0, 2.0)];
        let z = observe_full_path(&ch, &spec, &s, &[c(0.0); 3]).unwrap();
        for (zi, si) in z.iter().zip(&s) {
            assert!((zi - si).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_observation() {
        let ch = ChannelRealization { h: CMatrix::diag_real(&[2.0, 1.0]) };
        let spec = svd_ordered(&ch).unwrap();
        let z = observe_with_noise(&spec, &[c(1.0), c(1.0)], &[c(0.0), c(0.0)]).unwrap();
        assert!((z[0] - c(2.0)).norm() < 1e-12);
        assert!((z[1] - c(1.0)).norm() < 1e-12);
        let z = observe(&spec, &[c(1.0), c(1.0)], 1e-300, &mut stream(1, &[])).unwrap();
        assert!((z[0] - c(2.0)).norm() < 1e-12);
    }

    #[test]
    fn eigen_and_full_path_agree_on_rotated_noise() {
        let cfg = MimoConfig::from_snr_db(4, 5, 10.0, 1.0).unwrap();
        let mut rng = stream(9, &[]);
        let ch = sample_channel(&cfg, &mut rng);
        let spec = svd_ordered(&ch).unwrap();
        let s: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let noise: Vec<Complex64> = (0..5).map(|_| complex_gaussian(&mut rng, 0.3)).collect();
        let rotated = spec.u_bar.adjoint().matvec(&noise).unwrap();
        let a = observe_full_path(&ch, &spec, &s, &noise).unwrap();
        let b = observe_with_noise(&spec, &s, &rotated).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = svd_ordered(&ChannelRealization { h: CMatrix::identity(2) }).unwrap();
        assert!(matches!(
            observe_with_noise(&spec, &[c(1.0)], &[c(0.0), c(0.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
