//! Joint MGF of the ordered eigenvalues by successive variable elimination.
//!
//! All monomials are integrated together: after `λ_1, …, λ_k` are eliminated
//! the integrand is `e^{-R_k λ_{k+1}}` times a polynomial in the remaining
//! variables, whose like terms are merged before the next step. This shares
//! no code with the per-monomial suffix sums in [`super::nested`], so the two
//! serve as cross-checks of each other.

use super::expansion::{pack, MonomialExpansion};
use super::nested::ShiftVector;
use super::real::{DoubleDouble, Real};
use crate::error::{Error, Result};

/// `E{∏ e^{-shift_m λ_m}}` over ordered eigenvalues.
pub fn joint_mgf(exp: &MonomialExpansion, shift: &ShiftVector) -> Result<f64> {
    if shift.len() != exp.n {
        return Err(Error::DimensionMismatch { expected: exp.n, got: shift.len() });
    }
    let total_degree: u32 = exp.max_beta().iter().sum();
    if total_degree > 255 {
        return Err(Error::TooLarge { what: "total eigenvalue degree", count: total_degree as u128, cap: 255 });
    }
    // Always double-double: this route is the reference the faster nested
    // sums are checked against.
    let (v, abs) = eliminate::<DoubleDouble>(exp, shift.values());
    let ratio = abs.to_f64() / v.to_f64();
    if !(v.to_f64() > 0.0 && ratio.is_finite()) || ratio > 1e24 {
        return Err(Error::Numerical(format!(
            "MGF elimination lost all precision (value {:e}, magnitude {:e})",
            v.to_f64(),
            abs.to_f64()
        )));
    }
    Ok((v / exp.normalizer_dd).to_f64())
}

/// Returns the signed integral and the same integral with `|α|` in place of
/// `α` (a cancellation gauge).
fn eliminate<T: Real>(exp: &MonomialExpansion, shift: &[f64]) -> (T, T) {
    let n = exp.n;
    let mut poly: Vec<(u64, T, T)> = exp
        .terms
        .iter()
        .zip(&exp.alpha_f64)
        .map(|(t, &a)| (pack(&t.beta), T::from_f64(a), T::from_f64(a.abs())))
        .collect();
    let mut rate = T::zero();
    for (k, &a) in shift.iter().enumerate() {
        rate += T::one() + T::from_f64(a);
        let inv = T::one() / rate;
        let shift_k = 8 * k;
        let maxj = poly.iter().map(|&(key, _, _)| ((key >> shift_k) & 0xFF) as usize).max().unwrap_or(0);
        // table[j][i] = j! / (i! R^{j-i+1})
        let table: Vec<Vec<T>> = (0..=maxj)
            .map(|j| {
                let mut row = vec![T::zero(); j + 1];
                row[j] = inv;
                for i in (1..=j).rev() {
                    row[i - 1] = row[i] * T::from_f64(i as f64) * inv;
                }
                row
            })
            .collect();
        if k + 1 == n {
            let (mut v, mut s) = (T::Sum::default(), T::Sum::default());
            for &(key, c, m) in &poly {
                let f = table[((key >> shift_k) & 0xFF) as usize][0];
                T::accumulate(&mut v, c * f);
                T::accumulate(&mut s, m * f);
            }
            return (T::total(&v), T::total(&s));
        }
        let mut next: Vec<(u64, T, T)> = Vec::with_capacity(poly.len() * 4);
        for &(key, c, m) in &poly {
            let j = ((key >> shift_k) & 0xFF) as usize;
            let rest = key & !(0xFFu64 << shift_k);
            for (i, &f) in table[j].iter().enumerate() {
                next.push((rest + ((i as u64) << (shift_k + 8)), c * f, m * f));
            }
        }
        next.sort_unstable_by_key(|e| e.0);
        poly.clear();
        for (key, c, m) in next {
            match poly.last_mut() {
                Some(last) if last.0 == key => {
                    last.1 += c;
                    last.2 += m;
                }
                _ => poly.push((key, c, m)),
            }
        }
    }
    unreachable!("expansion has at least one variable")
}
