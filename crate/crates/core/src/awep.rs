//! Pairwise and word error probability bounds averaged over the ordered
//! eigenvalue distribution.
//!
//! With the Chiani bound `Q(x) ≤ e^{-x²/2}/12 + e^{-2x²/3}/4`, the average
//! PEP of a difference vector `ψ` is bounded by `I_1 + I_2`, where
//! `I_1 = M_λ(-a)/12`, `I_2 = M_λ(-b)/4`, `a_m = |ψ_m|²/(4N_0)` and
//! `b_m = |ψ_m|²/(3N_0)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{joint_mgf, signed_sum, MonomialExpansion, ShiftVector, SumOptions};
use crate::error::{Error, Result};
use crate::sl::DifferenceSet;

/// Standard normal tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `Q(sqrt(Σ λ_m |ψ_m|² / (2 N_0)))` for a fixed channel.
pub fn pep_conditional(psi: &[Complex64], lambdas: &[f64], n0: f64) -> Result<f64> {
    if psi.len() != lambdas.len() {
        return Err(Error::DimensionMismatch { expected: lambdas.len(), got: psi.len() });
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidInput("eigenvalues must be nonnegative".into()));
    }
    if !(n0 > 0.0) {
        return Err(Error::InvalidInput("noise level must be positive".into()));
    }
    let d: f64 = psi.iter().zip(lambdas).map(|(p, l)| l * p.norm_sqr()).sum();
    Ok(q_function((d / (2.0 * n0)).sqrt()))
}

/// The two Chiani-bound components of one average PEP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PepBoundTerms {
    pub i1: f64,
    pub i2: f64,
}

impl PepBoundTerms {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2
    }
}

fn check_psi(psi: &[Complex64], exp: &MonomialExpansion, n0: f64) -> Result<Vec<f64>> {
    if psi.len() != exp.n {
        return Err(Error::DimensionMismatch { expected: exp.n, got: psi.len() });
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::InvalidInput("noise level must be positive".into()));
    }
    let w: Vec<f64> = psi.iter().map(Complex64::norm_sqr).collect();
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("difference vector is zero".into()));
    }
    Ok(w)
}

fn scaled(w: &[f64], s: f64) -> Vec<f64> {
    w.iter().map(|x| x * s).collect()
}

fn bound_from_weights(w: &[f64], exp: &MonomialExpansion, n0: f64, opts: &SumOptions, zero_prefix: usize) -> Result<PepBoundTerms> {
    let mut a = scaled(w, 1.0 / (4.0 * n0));
    let mut b = scaled(w, 1.0 / (3.0 * n0));
    a[..zero_prefix].iter_mut().for_each(|x| *x = 0.0);
    b[..zero_prefix].iter_mut().for_each(|x| *x = 0.0);
    let c = exp.normalizer;
    Ok(PepBoundTerms {
        i1: signed_sum(exp, &a, opts)? / (12.0 * c),
        i2: signed_sum(exp, &b, opts)? / (4.0 * c),
    })
}

/// Average-PEP upper bound by per-monomial nested sums (authoritative path).
pub fn avg_pep_upper(psi: &[Complex64], exp: &MonomialExpansion, n0: f64) -> Result<PepBoundTerms> {
    let w = check_psi(psi, exp, n0)?;
    bound_from_weights(&w, exp, n0, &SumOptions::default(), 0)
}

/// The same bound through [`joint_mgf`], an independent evaluation route.
pub fn avg_pep_upper_via_mgf(psi: &[Complex64], exp: &MonomialExpansion, n0: f64) -> Result<PepBoundTerms> {
    let w = check_psi(psi, exp, n0)?;
    Ok(PepBoundTerms {
        i1: joint_mgf(exp, &ShiftVector::new(scaled(&w, 1.0 / (4.0 * n0)))?)? / 12.0,
        i2: joint_mgf(exp, &ShiftVector::new(scaled(&w, 1.0 / (3.0 * n0)))?)? / 4.0,
    })
}

/// Monomials minimising `B_p = Σ_{j>N} β_{p,j}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DominantSet {
    pub big_n: usize,
    pub b_min: u32,
    pub indices: Vec<usize>,
}

pub fn dominant_set(exp: &MonomialExpansion, big_n: usize) -> Result<DominantSet> {
    if big_n >= exp.n {
        return Err(Error::InvalidInput(format!("N = {big_n} must be below n = {}", exp.n)));
    }
    let b = |p: usize| exp.terms[p].beta[big_n..].iter().sum::<u32>();
    let b_min = (0..exp.count()).map(b).min().unwrap_or(0);
    let indices = (0..exp.count()).filter(|&p| b(p) == b_min).collect();
    Ok(DominantSet { big_n, b_min, indices })
}

/// High-SNR form of the bound for `ψ` with at least `dom.big_n` leading zeros:
/// only the dominant monomials are kept, and the first `N` integrations carry
/// no shift and pass on only their power-zero term.
pub fn asymptotic_pep(psi: &[Complex64], exp: &MonomialExpansion, dom: &DominantSet, n0: f64) -> Result<PepBoundTerms> {
    let w = check_psi(psi, exp, n0)?;
    asymptotic_from_weights(&w, exp, dom, n0)
}

fn asymptotic_from_weights(w: &[f64], exp: &MonomialExpansion, dom: &DominantSet, n0: f64) -> Result<PepBoundTerms> {
    let opts = SumOptions {
        subset: Some(&dom.indices),
        truncate: (dom.big_n > 0).then_some(dom.big_n),
        bump: None,
    };
    bound_from_weights(w, exp, n0, &opts, dom.big_n)
}

/// Difference vectors sharing the same `|ψ_m|²` profile contribute identically.
fn group_by_profile<'a>(vectors: impl Iterator<Item = &'a crate::sl::DiffVector>) -> Vec<(Vec<f64>, u64)> {
    let mut groups: BTreeMap<Vec<i64>, (Vec<f64>, u64)> = BTreeMap::new();
    for v in vectors {
        let w: Vec<f64> = v.psi.iter().map(Complex64::norm_sqr).collect();
        let key = w.iter().map(|x| (x * 1e12).round() as i64).collect();
        groups.entry(key).or_insert((w, 0)).1 += v.multiplicity;
    }
    groups.into_values().collect()
}

fn weighted_sum(groups: &[(Vec<f64>, u64)], f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<f64> {
    let parts: Vec<Result<f64>> = groups.par_iter().map(|(w, c)| Ok(*c as f64 * f(w)?)).collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Union bound on the average word error probability,
/// `(1/M^L) Σ_{s ≠ ŝ} (I_1 + I_2)(s - ŝ)`.
pub fn awep_upper_bound(diffs: &DifferenceSet, exp: &MonomialExpansion, n0: f64) -> Result<f64> {
    if diffs.n != exp.n {
        return Err(Error::DimensionMismatch { expected: exp.n, got: diffs.n });
    }
    if !(n0 > 0.0) {
        return Err(Error::InvalidInput("noise level must be positive".into()));
    }
    let groups = group_by_profile(diffs.vectors.iter());
    let opts = SumOptions::default();
    Ok(weighted_sum(&groups, |w| Ok(bound_from_weights(w, exp, n0, &opts, 0)?.total()))? / diffs.num_words)
}

/// High-SNR estimate of the AWEP from the vectors with at least `n_prime`
/// leading zeros and the dominant set `P_{n_prime}`.
pub fn asymptotic_awep(diffs: &DifferenceSet, exp: &MonomialExpansion, n0: f64, n_prime: usize) -> Result<f64> {
    if diffs.n != exp.n {
        return Err(Error::DimensionMismatch { expected: exp.n, got: diffs.n });
    }
    let dom = dominant_set(exp, n_prime)?;
    let groups = group_by_profile(diffs.with_leading_zeros_at_least(n_prime));
    if groups.is_empty() {
        return Err(Error::InvalidInput(format!("no difference vector has {n_prime} leading zeros")));
    }
    Ok(weighted_sum(&groups, |w| Ok(asymptotic_from_weights(w, exp, &dom, n0)?.total()))? / diffs.num_words)
}

/// `(N_r - N)(N_t - N)`.
pub fn diversity_gain(n_t: usize, n_r: usize, big_n: usize) -> Result<usize> {
    if big_n >= n_t.min(n_r) {
        return Err(Error::InvalidInput(format!("N = {big_n} must be below min(N_t, N_r) = {}", n_t.min(n_r))));
    }
    Ok((n_r - big_n) * (n_t - big_n))
}

/// Monte Carlo AWEP estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub awep: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub words: u64,
    pub errors: u64,
}

/// Analytic (and optionally simulated) AWEP over an SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AwepReport {
    pub snr_db: Vec<f64>,
    /// Raw union-bound values; may exceed 1 at low SNR.
    pub upper_bound: Vec<f64>,
    pub asymptotic: Vec<f64>,
    pub mc: Vec<Option<McEstimate>>,
    pub diversity: usize,
    /// Least-squares slope of `log10(bound)` against `SNR_dB / 10`.
    pub fitted_slope: Option<f64>,
    /// `G_c` from `AWEP ≈ (G_c SNR)^{-G_d}` on the same fit window.
    pub coding_gain: Option<f64>,
}

impl AwepReport {
    /// Grid points whose raw bound exceeds 1 (vacuous there).
    pub fn vacuous_points(&self) -> Vec<f64> {
        self.snr_db.iter().zip(&self.upper_bound).filter(|(_, &b)| b > 1.0).map(|(s, _)| *s).collect()
    }
}

/// Analytic report for a fixed system. `total_power` is `L E_s`.
pub fn analytic_report(
    diffs: &DifferenceSet,
    exp: &MonomialExpansion,
    big_n: usize,
    snr_db: &[f64],
    total_power: f64,
) -> Result<AwepReport> {
    let diversity = diversity_gain(exp.n_t, exp.n_r, big_n)?;
    let mut upper_bound = Vec::with_capacity(snr_db.len());
    let mut asymptotic = Vec::with_capacity(snr_db.len());
    for &s in snr_db {
        let n0 = total_power / 10f64.powf(s / 10.0);
        upper_bound.push(awep_upper_bound(diffs, exp, n0)?);
        asymptotic.push(asymptotic_awep(diffs, exp, n0, big_n)?);
    }
    let (fitted_slope, coding_gain) = fit_high_snr(snr_db, &upper_bound, diversity);
    Ok(AwepReport {
        snr_db: snr_db.to_vec(),
        upper_bound,
        asymptotic,
        mc: vec![None; snr_db.len()],
        diversity,
        fitted_slope,
        coding_gain,
    })
}

/// Fits `log10(value) = slope * SNR_dB/10 + c` over the last 10 dB of points
/// with value below `1e-3`; the coding gain uses the given diversity order.
pub fn fit_high_snr(snr_db: &[f64], values: &[f64], diversity: usize) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64)> = snr_db
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v < 1e-3)
        .map(|(&s, &v)| (s, v))
        .collect();
    let Some(top) = pts.iter().map(|p| p.0).reduce(f64::max) else {
        return (None, None);
    };
    let window: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 >= top - 10.0).map(|(s, v)| (s / 10.0, v.log10())).collect();
    if window.len() < 2 {
        return (None, None);
    }
    let k = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / k;
    let my = window.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = window.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (None, None);
    }
    let slope = window.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    // With the slope pinned to -G_d: log10 AWEP = -G_d (log10 G_c + SNR_dB/10).
    let gd = diversity as f64;
    let intercept = my + gd * mx;
    let coding_gain = (gd > 0.0).then(|| 10f64.powf(-intercept / gd));
    (Some(slope), coding_gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::expand_ordered_pdf;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn q_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
        let p = pep_conditional(&[c(1.0, 0.0), c(0.0, 2.0)], &[4.0, 1.0], 2.0).unwrap();
        assert!((p - q_function(2f64.sqrt())).abs() < 1e-15);
        assert!((p - 0.0786).abs() < 1e-4);
        assert_eq!(pep_conditional(&[c(0.0, 0.0)], &[1.0], 1.0).unwrap(), 0.5);
        assert!(pep_conditional(&[c(1.0, 0.0)], &[-1.0], 1.0).is_err());
    }

    #[test]
    fn two_paths_agree() {
        let e = expand_ordered_pdf(4, 4).unwrap();
        let psi = [c(0.0, 0.0), c(0.3, -0.2), c(1.1, 0.4), c(-0.7, 0.0)];
        for n0 in [1.0, 0.1, 0.01, 1e-4] {
            let a = avg_pep_upper(&psi, &e, n0).unwrap();
            let b = avg_pep_upper_via_mgf(&psi, &e, n0).unwrap();
            assert!((a.i1 - b.i1).abs() < 1e-10 * b.i1, "{n0}: {a:?} {b:?}");
            assert!((a.i2 - b.i2).abs() < 1e-10 * b.i2);
        }
    }

    #[test]
    fn dominant_sets() {
        let e = expand_ordered_pdf(2, 2).unwrap();
        let d = dominant_set(&e, 1).unwrap();
        assert_eq!(d.b_min, 0);
        assert_eq!(d.indices, vec![0]);
        let e = expand_ordered_pdf(3, 5).unwrap();
        let d = dominant_set(&e, 0).unwrap();
        assert_eq!(d.b_min as usize, 3 * 2 + 3 * 2);
        assert_eq!(d.indices.len(), e.count());
        assert!(dominant_set(&e, 3).is_err());
    }

    #[test]
    fn diversity() {
        assert_eq!(diversity_gain(4, 4, 2).unwrap(), 4);
        assert_eq!(diversity_gain(4, 4, 1).unwrap(), 9);
        assert_eq!(diversity_gain(3, 3, 0).unwrap(), 9);
        assert_eq!(diversity_gain(2, 5, 1).unwrap(), 4);
        assert!(diversity_gain(4, 4, 4).is_err());
    }

    #[test]
    fn asymptotic_tracks_full_bound() {
        let e = expand_ordered_pdf(4, 4).unwrap();
        let dom = dominant_set(&e, 2).unwrap();
        let psi = [c(0.0, 0.0), c(0.0, 0.0), c(0.8, 0.1), c(-0.4, 0.5)];
        let n0 = 1e-6;
        let full = avg_pep_upper(&psi, &e, n0).unwrap();
        let asym = asymptotic_pep(&psi, &e, &dom, n0).unwrap();
        assert!((asym.i1 / full.i1 - 1.0).abs() < 0.01);
        assert!((asym.i2 / full.i2 - 1.0).abs() < 0.01);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let snr: Vec<f64> = (0..=12).map(|k| 5.0 * k as f64).collect();
        let v: Vec<f64> = snr.iter().map(|s| (2.0 * 10f64.powf(s / 10.0)).powi(-3)).collect();
        let (slope, gc) = fit_high_snr(&snr, &v, 3);
        assert!((slope.unwrap() + 3.0).abs() < 1e-9);
        assert!((gc.unwrap() - 2.0).abs() < 1e-9);
    }
}
