use num_bigint::BigInt;
use slmimo::awep::{diversity_gain, dominant_set};
use slmimo::eigen::{expand_ordered_pdf, normalizer_closed_form};

/// Dominant monomials of the 4 x 4 density for N = 2, as published.
const TABLE_4X4_N2: [(i64, [u32; 4]); 9] = [
    (1, [6, 4, 2, 0]),
    (-2, [6, 4, 1, 1]),
    (1, [6, 4, 0, 2]),
    (-2, [5, 5, 2, 0]),
    (4, [5, 5, 1, 1]),
    (-2, [5, 5, 0, 2]),
    (1, [4, 6, 2, 0]),
    (-2, [4, 6, 1, 1]),
    (1, [4, 6, 0, 2]),
];

#[test]
fn four_by_four_counts_and_normalizer() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    assert_eq!(exp.count(), 201);
    assert_eq!(exp.normalizer_exact(), BigInt::from(144).into());
    assert_eq!(exp.normalizer, 144.0);
}

#[test]
fn dominant_rows_match_published_table() {
    let exp = expand_ordered_pdf(4, 4).unwrap();
    let dom = dominant_set(&exp, 2).unwrap();
    assert_eq!(dom.b_min, 2);
    let mut got: Vec<(BigInt, Vec<u32>)> =
        dom.indices.iter().map(|&p| (exp.terms[p].alpha.clone(), exp.terms[p].beta.clone())).collect();
    let mut want: Vec<(BigInt, Vec<u32>)> = TABLE_4X4_N2.iter().map(|(a, b)| (BigInt::from(*a), b.to_vec())).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

/// Direct expansion of `Π λ^{|Nt-Nr|} Π_{m>m'} (λ_m - λ_m')^2` by repeated
/// polynomial multiplication, coefficients keyed by exponent vector.
fn brute_expansion(n: usize, delta: u32) -> std::collections::BTreeMap<Vec<u32>, i64> {
    let mut poly = std::collections::BTreeMap::new();
    poly.insert(vec![delta; n], 1i64);
    for i in 0..n {
        for j in i + 1..n {
            // (λ_i - λ_j)^2 = λ_i^2 - 2 λ_i λ_j + λ_j^2
            let factor: [(i64, u32, u32); 3] = [(1, 2, 0), (-2, 1, 1), (1, 0, 2)];
            let mut next = std::collections::BTreeMap::new();
            for (e, c) in &poly {
                for (fc, di, dj) in factor {
                    let mut e2 = e.clone();
                    e2[i] += di;
                    e2[j] += dj;
                    *next.entry(e2).or_insert(0) += c * fc;
                }
            }
            next.retain(|_, c| *c != 0);
            poly = next;
        }
    }
    poly
}

#[test]
fn expansion_matches_direct_multiplication() {
    for (n_t, n_r) in [(2, 2), (2, 3), (3, 3), (3, 5), (4, 4)] {
        let exp = expand_ordered_pdf(n_t, n_r).unwrap();
        let want = brute_expansion(n_t.min(n_r), (n_t as i64 - n_r as i64).unsigned_abs() as u32);
        assert_eq!(exp.count(), want.len(), "{n_t}x{n_r}");
        for t in &exp.terms {
            assert_eq!(t.alpha, BigInt::from(want[&t.beta]), "{n_t}x{n_r} {:?}", t.beta);
        }
    }
}

/// The polynomial is symmetric, so its integral over the ordered cone is the
/// unordered one, `Σ α Π β_m!`, divided by `n!`.
#[test]
fn normalizer_equals_symmetric_integral() {
    for (n_t, n_r) in [(2, 2), (3, 3), (2, 4), (4, 4), (4, 6)] {
        let exp = expand_ordered_pdf(n_t, n_r).unwrap();
        let n = exp.n;
        let fact = |k: u32| (1..=k as u64).map(BigInt::from).product::<BigInt>();
        let unordered: BigInt = exp.terms.iter().map(|t| &t.alpha * t.beta.iter().map(|&b| fact(b)).product::<BigInt>()).sum();
        let n_fact = fact(n as u32);
        assert_eq!(&unordered % &n_fact, BigInt::from(0));
        let c = unordered / n_fact;
        assert_eq!(exp.normalizer_exact(), c.clone().into(), "{n_t}x{n_r}");
        assert_eq!(BigInt::from(normalizer_closed_form(n_t, n_r)), c, "{n_t}x{n_r}");
    }
}

#[test]
fn diversity_orders() {
    assert_eq!(diversity_gain(4, 4, 2).unwrap(), 4);
    for n in 1..=6 {
        assert_eq!(diversity_gain(n, n, 0).unwrap(), n * n);
    }
    assert_eq!(diversity_gain(4, 6, 1).unwrap(), 15);
    let exp = expand_ordered_pdf(4, 4).unwrap();
    for big_n in 0..4 {
        let dom = dominant_set(&exp, big_n).unwrap();
        let g = dom.b_min as usize + exp.n - big_n;
        assert_eq!(g, diversity_gain(4, 4, big_n).unwrap());
    }
}
