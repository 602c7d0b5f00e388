use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use slmimo::channel::{sample_spectrum, MimoConfig};
use slmimo::eigen::{expand_ordered_pdf, joint_mgf, joint_mgf_nested, mean_ordered_eigenvalues, nested_integral, ShiftVector};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=k {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    return (x, w);
                }
            }
        })
        .collect()
}

/// Ordered-cone integral of `Π λ_m^{β_m} e^{-r_m λ_m}` by nested composite
/// quadrature: `λ_n ∈ [0, T]`, then `λ_{k} ∈ [λ_{k+1}, λ_{k+1} + T]`.
fn quadrature(beta: &[u32], rates: &[f64], panels: usize, span: f64) -> f64 {
    let gl = gauss_legendre(16);
    fn level(k: usize, lo: f64, beta: &[u32], rates: &[f64], gl: &[(f64, f64)], panels: usize, span: f64) -> f64 {
        let h = span / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for &(x, w) in gl {
                let t = a + 0.5 * h * (x + 1.0);
                let f = t.powi(beta[k] as i32) * (-rates[k] * t).exp();
                let inner = if k == 0 { 1.0 } else { level(k - 1, t, beta, rates, gl, panels, span) };
                total += 0.5 * h * w * f * inner;
            }
        }
        total
    }
    level(beta.len() - 1, 0.0, beta, rates, &gl, panels, span)
}

#[test]
fn nested_sums_match_quadrature() {
    let cases: [(&[u32], &[f64]); 5] = [
        (&[0, 0], &[0.0, 0.0]),
        (&[2, 0], &[0.3, 1.7]),
        (&[4, 2], &[0.0, 5.0]),
        (&[1, 3, 0], &[0.2, 0.0, 2.5]),
        (&[3, 1, 2], &[1.0, 0.5, 0.25]),
    ];
    for (beta, shift) in cases {
        let rates: Vec<f64> = shift.iter().map(|s| 1.0 + s).collect();
        let panels = if beta.len() == 2 { 40 } else { 12 };
        let want = quadrature(beta, &rates, panels, 60.0);
        let got = nested_integral(beta, &ShiftVector::new(shift.to_vec()).unwrap()).unwrap();
        assert!((got - want).abs() <= 1e-9 * want, "{beta:?} {shift:?}: {got} vs {want}");
    }
}

#[test]
fn quadrature_reproduces_normalizer() {
    let exp = expand_ordered_pdf(2, 3).unwrap();
    let density_mass: f64 = exp
        .terms
        .iter()
        .map(|t| t.alpha.to_string().parse::<f64>().unwrap() * quadrature(&t.beta, &[1.0, 1.0], 40, 60.0))
        .sum();
    assert!((density_mass / exp.normalizer - 1.0).abs() < 1e-10);
}

fn gaussian(rng: &mut ChaCha20Rng) -> Complex64 {
    // Box-Muller, unit complex variance.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    let r = (-u1.ln()).sqrt();
    Complex64::from_polar(r, 2.0 * std::f64::consts::PI * u2)
}

/// Eigenvalues of `H H^H` for a 2 x 2 Rayleigh channel in closed form.
fn eig_2x2(rng: &mut ChaCha20Rng) -> [f64; 2] {
    let h: Vec<Complex64> = (0..4).map(|_| gaussian(rng)).collect();
    let a = h[0].norm_sqr() + h[1].norm_sqr();
    let d = h[2].norm_sqr() + h[3].norm_sqr();
    let b = h[0] * h[2].conj() + h[1] * h[3].conj();
    let disc = ((a - d) * (a - d) + 4.0 * b.norm_sqr()).sqrt();
    [(a + d + disc) / 2.0, ((a + d - disc) / 2.0).max(0.0)]
}

fn mc_mgf(samples: &[Vec<f64>], shift: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = samples.iter().map(|l| (-l.iter().zip(shift).map(|(a, b)| a * b).sum::<f64>()).exp()).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn mgf_matches_closed_form_eigenvalue_sampling() {
    let exp = expand_ordered_pdf(2, 2).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let samples: Vec<Vec<f64>> = (0..200_000).map(|_| eig_2x2(&mut rng).to_vec()).collect();
    let mut srng = ChaCha20Rng::seed_from_u64(12);
    for _ in 0..10 {
        let shift: Vec<f64> = (0..2).map(|_| 3.0 * srng.random::<f64>()).collect();
        let (mean, se) = mc_mgf(&samples, &shift);
        let v = joint_mgf(&exp, &ShiftVector::new(shift.clone()).unwrap()).unwrap();
        assert!((v - mean).abs() <= 3.0 * se, "{shift:?}: {v} vs {mean} ± {se}");
    }
}

#[test]
fn mgf_matches_svd_sampling_4x4() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    let cfg = MimoConfig::from_snr_db(4, 4, 10.0, 4.0).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let samples: Vec<Vec<f64>> = (0..50_000).map(|_| sample_spectrum(&cfg, &mut rng).unwrap()).collect();
    let mut srng = ChaCha20Rng::seed_from_u64(22);
    for _ in 0..10 {
        let shift: Vec<f64> = (0..4).map(|_| srng.random::<f64>()).collect();
        let (mean, se) = mc_mgf(&samples, &shift);
        let v = joint_mgf(&exp, &ShiftVector::new(shift.clone()).unwrap()).unwrap();
        assert!((v - mean).abs() <= 3.0 * se, "{shift:?}: {v} vs {mean} ± {se}");
    }
}

#[test]
fn elimination_and_nested_routes_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for (n_t, n_r) in [(2, 2), (3, 4), (4, 4), (6, 6)] {
        let exp = expand_ordered_pdf(n_t, n_r).unwrap();
        for scale in [0.0, 0.1, 1.0, 30.0, 1e4] {
            let shift: Vec<f64> = (0..exp.n).map(|_| scale * rng.random::<f64>()).collect();
            let sv = ShiftVector::new(shift).unwrap();
            let a = joint_mgf(&exp, &sv).unwrap();
            let b = joint_mgf_nested(&exp, &sv).unwrap();
            assert!((a - b).abs() <= 1e-9 * a, "{n_t}x{n_r} scale {scale}: {a} vs {b}");
        }
    }
}

#[test]
fn mean_eigenvalues_sum_to_trace() {
    for (n_t, n_r) in [(2, 2), (2, 4), (4, 4), (3, 5)] {
        let exp = expand_ordered_pdf(n_t, n_r).unwrap();
        let means = mean_ordered_eigenvalues(&exp).unwrap();
        assert!(means.windows(2).all(|w| w[0] > w[1]));
        let total: f64 = means.iter().sum();
        assert!((total - (n_t * n_r) as f64).abs() < 1e-10, "{n_t}x{n_r}: {total}");
    }
}
