use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use slmimo::awep::{
    asymptotic_awep, asymptotic_pep, avg_pep_upper, avg_pep_upper_via_mgf, awep_upper_bound, dominant_set, fit_high_snr,
    pep_conditional,
};
use slmimo::channel::{sample_spectrum, MimoConfig};
use slmimo::design::{rotated_baseline, BaseKind};
use slmimo::eigen::{expand_ordered_pdf, MonomialExpansion};
use slmimo::sl::{catalog, difference_set};

fn rising(x: f64, b: u32) -> f64 {
    (0..b).map(|k| x + k as f64).product()
}

/// Written-out high-SNR PEP term for `n = 4`, `N = 2` with the shifts of the
/// two weakest eigenvalues only.
fn literal_n4_n2(exp: &MonomialExpansion, s3: f64, s4: f64, weight: f64) -> f64 {
    let dom = dominant_set(exp, 2).unwrap();
    let mut total = 0.0;
    for &p in &dom.indices {
        let t = &exp.terms[p];
        let (b1, b2, b3, b4) = (t.beta[0], t.beta[1], t.beta[2], t.beta[3]);
        let alpha: f64 = t.alpha.to_string().parse().unwrap();
        let e = (b3 + b4 + 2) as i32;
        let head = alpha * rising(1.0, b1) * rising(1.0, b3) / (2f64.powi(e) * (1.0 + (1.0 + s3) / 2.0).powi(e));
        let first: f64 = (0..=b1).map(|i1| rising(i1 as f64 + 1.0, b2) / 2f64.powi((b2 + i1 + 1) as i32)).sum();
        let r = 1.0 + (1.0 + s4) / (3.0 + s3);
        let second: f64 = (0..=b3).map(|i3| rising(i3 as f64 + 1.0, b4) / r.powi((b4 + i3 + 1) as i32)).sum();
        total += head * first * second;
    }
    weight * total / exp.normalizer
}

#[test]
fn literal_four_eigenvalue_form_matches_generic_path() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    let dom = dominant_set(&exp, 2).unwrap();
    let z = |re: f64, im: f64| Complex64::new(re, im);
    let psis = [
        [z(0.0, 0.0), z(0.0, 0.0), z(1.0, 0.5), z(0.3, -0.2)],
        [z(0.0, 0.0), z(0.0, 0.0), z(0.0, 2.0), z(0.0, 0.0)],
        [z(0.0, 0.0), z(0.0, 0.0), z(-0.7, 0.1), z(1.5, 1.5)],
    ];
    for (psi, n0) in psis.iter().zip([0.01, 1e-4, 0.3]) {
        let w: Vec<f64> = psi.iter().map(|p| p.norm_sqr()).collect();
        let i1 = literal_n4_n2(&exp, w[2] / (4.0 * n0), w[3] / (4.0 * n0), 1.0 / 12.0);
        let i2 = literal_n4_n2(&exp, w[2] / (3.0 * n0), w[3] / (3.0 * n0), 1.0 / 4.0);
        let got = asymptotic_pep(psi, &exp, &dom, n0).unwrap();
        assert!((got.i1 - i1).abs() <= 1e-10 * i1, "{} vs {i1}", got.i1);
        assert!((got.i2 - i2).abs() <= 1e-10 * i2, "{} vs {i2}", got.i2);
    }
}

#[test]
fn bound_dominates_simulated_average_pep() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    let cfg = MimoConfig::from_snr_db(4, 4, 10.0, 4.0).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let spectra: Vec<Vec<f64>> = (0..20_000).map(|_| sample_spectrum(&cfg, &mut rng).unwrap()).collect();
    for _ in 0..5 {
        let psi: Vec<Complex64> = (0..4).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n0 = 0.05;
        let mc = spectra.iter().map(|l| pep_conditional(&psi, l, n0).unwrap()).sum::<f64>() / spectra.len() as f64;
        let ub = avg_pep_upper(&psi, &exp, n0).unwrap();
        let via = avg_pep_upper_via_mgf(&psi, &exp, n0).unwrap();
        assert!(ub.total() >= mc, "{} < {mc}", ub.total());
        assert!((ub.i1 - via.i1).abs() <= 1e-9 * via.i1);
        assert!((ub.i2 - via.i2).abs() <= 1e-9 * via.i2);
    }
}

#[test]
fn layered_system_slope_and_asymptote() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    let sl = catalog::regular_4x6();
    let books = rotated_baseline(&sl, BaseKind::Qam, 4, 1.0, false).unwrap();
    let diffs = difference_set(&books, &sl).unwrap();
    let snr = [40.0, 50.0, 60.0];
    let ub: Vec<f64> = snr.iter().map(|s| awep_upper_bound(&diffs, &exp, 6.0 / 10f64.powf(s / 10.0)).unwrap()).collect();
    let (slope, _) = fit_high_snr(&snr, &ub, 4);
    let slope = slope.unwrap();
    assert!((slope + 4.0).abs() <= 0.2, "slope {slope}");
    let asym = asymptotic_awep(&diffs, &exp, 6.0 / 1e6, 2).unwrap();
    let ratio = asym / ub[2];
    assert!((0.8..=1.2).contains(&ratio), "ratio {ratio}");
}
