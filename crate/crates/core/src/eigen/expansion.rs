//! Exact monomial expansion of the joint density of ordered Wishart eigenvalues
//! `p(λ) = (1/C) ∏ e^{-λ_m} λ_m^δ ∏_{m>m'} (λ_m - λ_{m'})²`.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::nested::{signed_sum_dd, SumOptions};
use super::real::{DoubleDouble, Real};
use crate::error::{Error, Result};

/// Largest spectrum size accepted; the term count grows roughly like `(n!)²`.
pub const MAX_N: usize = 8;

/// Exponents are packed one byte per variable into a `u64` key.
const MAX_EXPONENT: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub alpha: BigInt,
    pub beta: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct MonomialExpansion {
    pub n_t: usize,
    pub n_r: usize,
    pub n: usize,
    pub delta: usize,
    /// Sorted by decreasing exponent vector (lexicographic).
    pub terms: Vec<Monomial>,
    /// `alpha` as `f64`; exact because `|alpha| < 2^53` for every accepted size.
    pub alpha_f64: Vec<f64>,
    /// Normalizer evaluated by the nested sums at zero shift.
    pub normalizer: f64,
    pub normalizer_dd: DoubleDouble,
    beta_max: Vec<u32>,
}

pub(crate) fn pack(beta: &[u32]) -> u64 {
    beta.iter().enumerate().fold(0u64, |k, (i, &b)| k | (u64::from(b) << (8 * i)))
}

pub(crate) fn unpack(key: u64, n: usize) -> Vec<u32> {
    (0..n).map(|i| ((key >> (8 * i)) & 0xFF) as u32).collect()
}

pub fn expand_ordered_pdf(n_t: usize, n_r: usize) -> Result<MonomialExpansion> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::InvalidInput("antenna counts must be at least 1".into()));
    }
    let n = n_t.min(n_r);
    let delta = n_t.abs_diff(n_r);
    if n > MAX_N {
        return Err(Error::TooLarge { what: "spectrum size", count: n as u128, cap: MAX_N as u128 });
    }
    if delta + 2 * (n - 1) > MAX_EXPONENT {
        return Err(Error::TooLarge {
            what: "eigenvalue exponent",
            count: (delta + 2 * (n - 1)) as u128,
            cap: MAX_EXPONENT as u128,
        });
    }

    // Iterated multiplication by (λ_m - λ_m')² = λ_m² - 2 λ_m λ_m' + λ_m'².
    let mut poly: Vec<(u64, i128)> = vec![(0, 1)];
    for m in 1..n {
        for mp in 0..m {
            let (sm, smp) = (8 * m, 8 * mp);
            let factors: [(u64, i128); 3] =
                [(2 << sm, 1), ((1 << sm) + (1 << smp), -2), (2 << smp, 1)];
            let mut next = Vec::with_capacity(poly.len() * 3);
            for &(k, c) in &poly {
                for &(fk, fc) in &factors {
                    let v = c
                        .checked_mul(fc)
                        .ok_or_else(|| Error::Numerical("coefficient overflow during expansion".into()))?;
                    next.push((k + fk, v));
                }
            }
            poly = merge(next)?;
        }
    }

    let mut terms: Vec<Monomial> = poly
        .into_iter()
        .map(|(k, c)| {
            let mut beta = unpack(k, n);
            beta.iter_mut().for_each(|b| *b += delta as u32);
            Monomial { alpha: BigInt::from(c), beta }
        })
        .collect();
    terms.sort_by(|a, b| b.beta.cmp(&a.beta));

    let alpha_f64 = terms.iter().map(|t| t.alpha.to_f64().unwrap_or(f64::NAN)).collect();
    let mut exp = MonomialExpansion {
        n_t,
        n_r,
        n,
        delta,
        terms,
        alpha_f64,
        normalizer: 1.0,
        normalizer_dd: DoubleDouble::one(),
        beta_max: Vec::new(),
    };
    let mut mx = vec![0u32; n];
    for t in &exp.terms {
        for (m, &b) in mx.iter_mut().zip(&t.beta) {
            *m = (*m).max(b);
        }
    }
    exp.beta_max = mx;
    let c = signed_sum_dd(&exp, &vec![0.0; n], &SumOptions::default())?;
    exp.normalizer = c.to_f64();
    exp.normalizer_dd = c;
    Ok(exp)
}

fn merge(mut v: Vec<(u64, i128)>) -> Result<Vec<(u64, i128)>> {
    v.sort_unstable_by_key(|&(k, _)| k);
    let mut out: Vec<(u64, i128)> = Vec::with_capacity(v.len());
    for (k, c) in v {
        match out.last_mut() {
            Some((lk, lc)) if *lk == k => {
                *lc = lc
                    .checked_add(c)
                    .ok_or_else(|| Error::Numerical("coefficient overflow during expansion".into()))?
            }
            _ => out.push((k, c)),
        }
    }
    out.retain(|&(_, c)| c != 0);
    Ok(out)
}

impl MonomialExpansion {
    pub fn count(&self) -> usize {
        self.terms.len()
    }

    /// Largest exponent appearing in each position.
    pub fn max_beta(&self) -> Vec<u32> {
        self.beta_max.clone()
    }

    /// Evaluates `Σ_p α_p ∏_m λ_m^{β_{p,m}}` at `lambdas`.
    pub fn eval_polynomial(&self, lambdas: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(&self.alpha_f64)
            .map(|(t, a)| a * t.beta.iter().zip(lambdas).map(|(&b, l)| l.powi(b as i32)).product::<f64>())
            .sum()
    }

    /// `∏ λ_m^δ ∏_{m>m'} (λ_m - λ_{m'})²` evaluated directly.
    pub fn eval_product(&self, lambdas: &[f64]) -> f64 {
        let mut p: f64 = lambdas.iter().map(|l| l.powi(self.delta as i32)).product();
        for m in 1..self.n {
            for mp in 0..m {
                p *= (lambdas[m] - lambdas[mp]).powi(2);
            }
        }
        p
    }

    /// Normalized joint density of the ordered eigenvalues (zero outside the
    /// ordered cone).
    pub fn density(&self, lambdas: &[f64]) -> f64 {
        if lambdas.windows(2).any(|w| w[0] < w[1]) || lambdas.iter().any(|&l| l < 0.0) {
            return 0.0;
        }
        let e: f64 = lambdas.iter().sum();
        (-e).exp() * self.eval_product(lambdas) / self.normalizer
    }

    /// Normalizer as an exact rational, from the nested sums at zero shift
    /// (all rates are then integers).
    pub fn normalizer_exact(&self) -> BigRational {
        let n = self.n;
        let mut total = BigRational::zero();
        for t in &self.terms {
            total += BigRational::from_integer(t.alpha.clone()) * exact_zero_shift_integral(&t.beta, n);
        }
        total
    }

    /// Tab-free text table: one term per line, `alpha beta_1 ... beta_n`.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            let _ = write!(s, "{}", t.alpha);
            for b in &t.beta {
                let _ = write!(s, " {b}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`MonomialExpansion::to_table`]; lines starting
    /// with `#` are ignored.
    pub fn parse_table(text: &str) -> Result<Vec<Monomial>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let alpha: BigInt = it
                .next()
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::Parse(format!("line {}: bad coefficient", i + 1)))?;
            let beta = it
                .map(|b| b.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            out.push(Monomial { alpha, beta });
        }
        Ok(out)
    }
}

/// Exact value of the zero-shift ordered integral for one exponent vector,
/// using the same suffix-sum recursion in rational arithmetic.
fn exact_zero_shift_integral(beta: &[u32], n: usize) -> BigRational {
    let fact = |k: u32| -> BigRational {
        BigRational::from_integer((1..=k).fold(BigInt::one(), |a, t| a * BigInt::from(t)))
    };
    let pow = |r: u32, k: u32| -> BigRational { BigRational::from_integer(BigInt::from(r).pow(k)) };
    // w: polynomial coefficients in the next variable.
    let mut w: Vec<BigRational> = vec![BigRational::zero(); beta[0] as usize + 1];
    w[beta[0] as usize] = BigRational::one();
    for k in 0..n {
        let r = (k + 1) as u32;
        let u: Vec<BigRational> =
            w.iter().enumerate().map(|(j, c)| c * fact(j as u32) / pow(r, j as u32 + 1)).collect();
        if k + 1 == n {
            return u.into_iter().fold(BigRational::zero(), |a, b| a + b);
        }
        let b = beta[k + 1] as usize;
        let mut next = vec![BigRational::zero(); u.len() + b];
        let mut suffix = BigRational::zero();
        for i in (0..u.len()).rev() {
            suffix += &u[i];
            next[i + b] = &suffix * pow(r, i as u32) / fact(i as u32);
        }
        w = next;
    }
    unreachable!()
}

/// `∏_{i=1}^{n} (n-i)! (n_max-i)!`, the known closed form of the normalizer.
pub fn normalizer_closed_form(n_t: usize, n_r: usize) -> BigUint {
    let n = n_t.min(n_r);
    let nmax = n_t.max(n_r);
    let fact = |k: usize| (1..=k).fold(BigUint::one(), |a, t| a * BigUint::from(t));
    (1..=n).fold(BigUint::one(), |a, i| a * fact(n - i) * fact(nmax - i))
}
