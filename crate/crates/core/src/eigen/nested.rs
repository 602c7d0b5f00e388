//! Nested incomplete-Gamma sums for integrals over the ordered cone
//! `λ_1 ≥ λ_2 ≥ … ≥ λ_n ≥ 0`.
//!
//! The innermost integral over `λ_1` is taken first. Integrating
//! `λ^j e^{-R λ}` from the next variable `x` to infinity yields
//! `j!/R^{j+1} Σ_{i≤j} (R x)^i / i! e^{-R x}`, so the state between levels is a
//! vector of suffix sums `S_i` indexed by the power `i` passed on to the next
//! variable. With cumulative rates `R_k = k + Σ_{t≤k} (1 + a_t)`, the
//! contribution at level `k` of power `i` is
//! `S_i (R_{k-1}/R_k)^i (i+1)_{β_k} / R_k^{β_k+1}`, where `(x)_b` is the rising
//! factorial. Every quantity stays within a few orders of magnitude of the
//! final value, so no explicit factorials are formed.

use super::expansion::MonomialExpansion;
use super::real::{DoubleDouble, Real};
use crate::error::{Error, Result};

/// Relative cancellation (`Σ|α I| / |Σ α I|`) above which the signed sum is
/// recomputed in double-double: beyond it `f64` would lose more than six
/// decimal digits.
pub const ESCALATE_RATIO: f64 = 1e6;

/// Cancellation ratio at which even double-double cannot guarantee a relative
/// error below `1e-6`.
const FAIL_RATIO: f64 = 1e24;

/// Nonnegative shift added to the unit rate of each eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftVector {
    values: Vec<f64>,
}

impl ShiftVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("shift entries must be finite and nonnegative, got {v}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct Level<T> {
    /// `R_{k-1} / R_k` (unused at level 0).
    ratio: T,
    /// `b! / R_k^{b+1}` for `b = 0..`.
    base: Vec<T>,
}

/// Per-shift tables shared by every monomial.
pub(crate) struct Rates<T> {
    levels: Vec<Level<T>>,
    /// `coef[k][b][i] = b!/R_k^{b+1} (R_{k-1}/R_k)^i C(i+b, i)`: weight of the
    /// carried power `i` at level `k ≥ 1` for exponent `b`.
    coef: Vec<Vec<Vec<T>>>,
    /// `i` and `1/i` as `T`, `i = 0..`.
    int: Vec<T>,
    inv: Vec<T>,
}

impl<T: Real> Rates<T> {
    pub(crate) fn new(shift: &[f64], max_beta: &[u32]) -> Self {
        let degree: usize = max_beta.iter().map(|&b| b as usize).sum::<usize>() + max_beta.len() + 2;
        let mut levels = Vec::with_capacity(shift.len());
        let mut rate = T::zero();
        let mut prev = T::one();
        for (k, (&a, &mb)) in shift.iter().zip(max_beta).enumerate() {
            rate += T::one() + T::from_f64(a);
            let inv_rate = T::one() / rate;
            let mut base = Vec::with_capacity(mb as usize + 2);
            let mut v = inv_rate;
            base.push(v);
            for b in 1..=mb as usize + 1 {
                v = v * T::from_f64(b as f64) * inv_rate;
                base.push(v);
            }
            let ratio = if k == 0 { T::one() } else { prev * inv_rate };
            levels.push(Level { ratio, base });
            prev = rate;
        }
        let int: Vec<T> = (0..=degree).map(|i| T::from_f64(i as f64)).collect();
        let inv: Vec<T> = (0..=degree)
            .map(|i| if i == 0 { T::zero() } else { T::one() / T::from_f64(i as f64) })
            .collect();
        let mut coef = vec![Vec::new()];
        let mut width = max_beta.first().map_or(0, |&b| b as usize) + 1;
        for (lv, &mb) in levels.iter().zip(max_beta).skip(1) {
            let table = (0..=mb as usize)
                .map(|b| {
                    let mut row = Vec::with_capacity(width);
                    let mut c = lv.base[b];
                    row.push(c);
                    for i in 1..width {
                        c = c * lv.ratio * int[i + b] * inv[i];
                        row.push(c);
                    }
                    row
                })
                .collect();
            coef.push(table);
            width += mb as usize;
        }
        Self { levels, coef, int, inv }
    }
}

pub(crate) struct Scratch<T> {
    s: Vec<T>,
    u: Vec<T>,
}

impl<T> Default for Scratch<T> {
    fn default() -> Self {
        Self { s: Vec::new(), u: Vec::new() }
    }
}

/// One ordered-cone integral. With `truncate = Some(k)` only the power-zero
/// term is carried into level `k`, which isolates the leading high-SNR
/// behaviour when the first `k` rates carry no shift.
pub(crate) fn integral<T: Real>(beta: &[u32], rates: &Rates<T>, truncate: Option<usize>, sc: &mut Scratch<T>) -> T {
    let n = beta.len();
    let b0 = beta[0] as usize;
    let u0 = rates.levels[0].base[b0];
    if n == 1 {
        return u0;
    }
    sc.s.clear();
    sc.s.resize(b0 + 1, u0);
    for k in 1..n {
        let lv = &rates.levels[k];
        let b = beta[k] as usize;
        let len = if truncate == Some(k) { 1 } else { sc.s.len() };
        sc.u.clear();
        sc.u.resize(len + b, T::zero());
        let mut coeff = lv.base[b];
        for i in 0..len {
            if i > 0 {
                coeff = coeff * lv.ratio * rates.int[i + b] * rates.inv[i];
            }
            sc.u[i + b] = sc.s[i] * coeff;
        }
        if k + 1 == n {
            let mut acc = T::zero();
            for &x in sc.u.iter().rev() {
                acc += x;
            }
            return acc;
        }
        sc.s.clear();
        sc.s.resize(sc.u.len(), T::zero());
        let mut acc = T::zero();
        for i in (0..sc.u.len()).rev() {
            acc += sc.u[i];
            sc.s[i] = acc;
        }
    }
    unreachable!()
}

/// `∫_{ordered cone} ∏ e^{-(1+shift_m) λ_m} λ_m^{β_m} dλ`.
pub fn nested_integral(beta: &[u32], shift: &ShiftVector) -> Result<f64> {
    if beta.len() != shift.len() || beta.is_empty() {
        return Err(Error::DimensionMismatch { expected: shift.len(), got: beta.len() });
    }
    let rates = Rates::<f64>::new(shift.values(), beta);
    let v = integral(beta, &rates, None, &mut Scratch::default());
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Numerical(format!("ordered integral out of range for exponents {beta:?}")));
    }
    Ok(v)
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct SumOptions<'a> {
    /// Restrict to these term indices.
    pub subset: Option<&'a [usize]>,
    /// Keep only the power-zero path into this level.
    pub truncate: Option<usize>,
    /// Raise this eigenvalue's exponent by one in every term.
    pub bump: Option<usize>,
}

/// Evaluates [`integral`] for a sequence of exponent vectors, reusing the
/// level states of the longest common prefix with the previous vector.
struct PrefixCache<T> {
    prev: Vec<u32>,
    /// `states[k]`: suffix sums after level `k`.
    states: Vec<Vec<T>>,
}

impl<T: Real> PrefixCache<T> {
    fn new(n: usize) -> Self {
        Self { prev: Vec::new(), states: (0..n).map(|_| Vec::new()).collect() }
    }

    fn eval(&mut self, beta: &[u32], rates: &Rates<T>, truncate: Option<usize>) -> T {
        let n = beta.len();
        let start = if self.prev.len() == n { beta.iter().zip(&self.prev).take_while(|(a, b)| a == b).count() } else { 0 };
        self.prev.clear();
        self.prev.extend_from_slice(beta);
        if n == 1 {
            return rates.levels[0].base[beta[0] as usize];
        }
        // The last level always depends on its own exponent.
        let start = start.min(n - 1);
        if start == 0 {
            let b0 = beta[0] as usize;
            let s = &mut self.states[0];
            s.clear();
            s.resize(b0 + 1, rates.levels[0].base[b0]);
        }
        for k in start.max(1)..n {
            let b = beta[k] as usize;
            let c = &rates.coef[k][b];
            let (done, rest) = self.states.split_at_mut(k);
            let s = &done[k - 1];
            let len = if truncate == Some(k) { 1 } else { s.len() };
            if k + 1 == n {
                let mut acc = T::zero();
                for i in (0..len).rev() {
                    acc += s[i] * c[i];
                }
                return acc;
            }
            let out = &mut rest[0];
            out.clear();
            out.resize(len + b, T::zero());
            let mut acc = T::zero();
            for i in (0..len).rev() {
                acc += s[i] * c[i];
                out[i + b] = acc;
            }
            for x in &mut out[..b] {
                *x = acc;
            }
        }
        unreachable!()
    }
}

fn pass<T: Real>(exp: &MonomialExpansion, rates: &Rates<T>, opts: &SumOptions) -> (T, T) {
    let mut cache = PrefixCache::new(exp.n);
    let mut beta = vec![0u32; exp.n];
    let mut total = T::Sum::default();
    let mut abs = T::zero();
    let mut visit = |p: usize| {
        beta.copy_from_slice(&exp.terms[p].beta);
        if let Some(m) = opts.bump {
            beta[m] += 1;
        }
        let term = T::from_f64(exp.alpha_f64[p]) * cache.eval(&beta, rates, opts.truncate);
        abs += term.abs();
        T::accumulate(&mut total, term);
    };
    match opts.subset {
        Some(idx) => idx.iter().for_each(|&p| visit(p)),
        None => (0..exp.terms.len()).for_each(&mut visit),
    }
    (T::total(&total), abs)
}

/// `Σ_p α_p I_p` (not divided by the normalizer), in `f64` with escalation to
/// double-double when cancellation is severe.
pub(crate) fn signed_sum(exp: &MonomialExpansion, shift: &[f64], opts: &SumOptions) -> Result<f64> {
    let mut max_beta = exp.max_beta();
    if let Some(m) = opts.bump {
        max_beta[m] += 1;
    }
    let rates = Rates::<f64>::new(shift, &max_beta);
    let (v, abs) = pass(exp, &rates, opts);
    if v.is_finite() && abs.is_finite() && v > 0.0 && abs <= ESCALATE_RATIO * v {
        return Ok(v);
    }
    if !abs.is_finite() {
        return Err(Error::Numerical("nested sum overflowed".into()));
    }
    let rates = Rates::<DoubleDouble>::new(shift, &max_beta);
    let (v, abs) = pass(exp, &rates, opts);
    let (v, abs) = (v.to_f64(), abs.to_f64());
    if !(v > 0.0) || abs > FAIL_RATIO * v {
        return Err(Error::Numerical(format!(
            "signed monomial sum lost all precision (value {v:e}, magnitude {abs:e})"
        )));
    }
    Ok(v)
}

/// [`signed_sum`] evaluated directly in double-double.
pub(crate) fn signed_sum_dd(exp: &MonomialExpansion, shift: &[f64], opts: &SumOptions) -> Result<DoubleDouble> {
    let rates = Rates::<DoubleDouble>::new(shift, &exp.max_beta());
    let (v, abs) = pass(exp, &rates, opts);
    if !(v.to_f64() > 0.0) || abs.to_f64() > FAIL_RATIO * v.to_f64() {
        return Err(Error::Numerical("signed monomial sum lost all precision".into()));
    }
    Ok(v)
}

/// `E{∏ e^{-a_m λ_m}}` by per-monomial nested sums.
pub fn joint_mgf_nested(exp: &MonomialExpansion, shift: &ShiftVector) -> Result<f64> {
    if shift.len() != exp.n {
        return Err(Error::DimensionMismatch { expected: exp.n, got: shift.len() });
    }
    Ok(signed_sum(exp, shift.values(), &SumOptions::default())? / exp.normalizer)
}

/// Means of the ordered eigenvalues, `E{λ_m}`, in decreasing order.
pub fn mean_ordered_eigenvalues(exp: &MonomialExpansion) -> Result<Vec<f64>> {
    let zero = vec![0.0; exp.n];
    (0..exp.n)
        .map(|m| Ok(signed_sum(exp, &zero, &SumOptions { bump: Some(m), ..Default::default() })? / exp.normalizer))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::expansion::expand_ordered_pdf;

    fn sv(v: &[f64]) -> ShiftVector {
        ShiftVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prefix_cache_matches_direct_evaluation() {
        let exp = expand_ordered_pdf(4, 4).unwrap();
        let shift = [0.3, 2.0, 0.0, 7.5];
        let rates = Rates::<f64>::new(&shift, &exp.max_beta());
        for truncate in [None, Some(2)] {
            let mut cache = PrefixCache::new(4);
            for t in exp.terms.iter().chain(exp.terms.iter().rev()) {
                let a = cache.eval(&t.beta, &rates, truncate);
                let b = integral(&t.beta, &rates, truncate, &mut Scratch::default());
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn gamma_integral() {
        for (k, a) in [(0u32, 0.0f64), (3, 0.5), (7, 2.0)] {
            let want = (1..=k).product::<u32>() as f64 / (1.0 + a).powi(k as i32 + 1);
            let got = nested_integral(&[k], &sv(&[a])).unwrap();
            assert!((got - want).abs() < 1e-14 * want);
        }
    }

    #[test]
    fn ordered_wedge_is_half() {
        assert!((nested_integral(&[0, 0], &sv(&[0.0, 0.0])).unwrap() - 0.5).abs() < 1e-16);
        // Three exchangeable exponentials: 1/3! of the mass.
        assert!((nested_integral(&[0, 0, 0], &sv(&[0.0; 3])).unwrap() - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn two_by_two_pieces() {
        let z = sv(&[0.0, 0.0]);
        assert!((nested_integral(&[2, 0], &z).unwrap() - 1.75).abs() < 1e-15);
        assert!((nested_integral(&[1, 1], &z).unwrap() - 0.5).abs() < 1e-15);
        assert!((nested_integral(&[0, 2], &z).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn double_double_agrees_with_f64() {
        let beta = [6, 4, 2, 0];
        let shift = [0.3, 1.7, 0.0, 4.0];
        let a = integral(&beta, &Rates::<f64>::new(&shift, &beta), None, &mut Scratch::default());
        let b = integral(&beta, &Rates::<DoubleDouble>::new(&shift, &beta), None, &mut Scratch::default());
        assert!((a - b.to_f64()).abs() < 1e-14 * a);
    }

    #[test]
    fn shift_validation() {
        assert!(ShiftVector::new(vec![-1.0]).is_err());
        assert!(ShiftVector::new(vec![f64::NAN]).is_err());
        assert!(nested_integral(&[1, 2], &sv(&[0.0])).is_err());
    }

    #[test]
    fn means_sum_to_trace() {
        for (nt, nr) in [(1, 1), (2, 2), (2, 3), (4, 4)] {
            let e = expand_ordered_pdf(nt, nr).unwrap();
            let m = mean_ordered_eigenvalues(&e).unwrap();
            assert!(m.windows(2).all(|w| w[0] > w[1]));
            let s: f64 = m.iter().sum();
            assert!((s - (nt * nr) as f64).abs() < 1e-10, "{nt}x{nr}: {s}");
        }
    }

    #[test]
    fn mgf_at_zero_is_one() {
        for n in 1..=5 {
            let e = expand_ordered_pdf(n, n).unwrap();
            let v = joint_mgf_nested(&e, &ShiftVector::zeros(n)).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "n = {n}: {v}");
        }
    }
}
