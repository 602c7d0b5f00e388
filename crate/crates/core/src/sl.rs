//! Sparse layering: the layer-to-eigen-channel matrix, per-layer codebooks,
//! superposition, the per-channel separability condition and difference sets.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Entries with magnitude at or below this are treated as zero when counting
/// leading zeros.
pub const ZERO_THRESHOLD: f64 = 1e-9;

/// Largest supported number of eigen-channels for difference-set keys.
const MAX_DIM: usize = 8;

/// Binary `n x L` layering matrix with its derived index sets (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlMatrix {
    a: Vec<Vec<u8>>,
    supports: Vec<Vec<usize>>,
    interferers: Vec<Vec<usize>>,
    d_max: usize,
    big_n: usize,
}

impl SlMatrix {
    /// Validates a 0/1 matrix given as rows and derives `N_l`, `D_m`, `d_max`
    /// and `N`.
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if n == 0 || l == 0 {
            return Err(Error::InvalidLayering("matrix is empty".into()));
        }
        if rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidLayering("ragged rows".into()));
        }
        if rows.iter().flatten().any(|&x| x > 1) {
            return Err(Error::InvalidLayering("entries must be 0 or 1".into()));
        }
        let supports: Vec<Vec<usize>> = (0..l).map(|c| (0..n).filter(|&r| rows[r][c] == 1).collect()).collect();
        if let Some(c) = supports.iter().position(Vec::is_empty) {
            return Err(Error::InvalidLayering(format!("layer {} uses no eigen-channel", c + 1)));
        }
        let interferers: Vec<Vec<usize>> = rows.iter().map(|r| (0..l).filter(|&c| r[c] == 1).collect()).collect();
        let d_max = interferers.iter().map(Vec::len).max().unwrap_or(0);
        let big_n = supports.iter().map(|s| s[0]).max().unwrap_or(0);
        Ok(Self { a: rows, supports, interferers, d_max, big_n })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn layers(&self) -> usize {
        self.supports.len()
    }

    pub fn entry(&self, m: usize, l: usize) -> u8 {
        self.a[m][l]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.a
    }

    /// `N_l`: eigen-channels used by layer `l`, ascending.
    pub fn support(&self, l: usize) -> &[usize] {
        &self.supports[l]
    }

    /// `D_m`: layers using eigen-channel `m`, ascending.
    pub fn interferers(&self, m: usize) -> &[usize] {
        &self.interferers[m]
    }

    pub fn n_l(&self, l: usize) -> usize {
        self.supports[l].len()
    }

    pub fn d_m(&self, m: usize) -> usize {
        self.interferers[m].len()
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Largest number of leading zeros over the columns.
    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn column_leading_zeros(&self, l: usize) -> usize {
        self.supports[l][0]
    }

    /// Layers whose column has exactly `k` leading zeros.
    pub fn layers_with_leading_zeros(&self, k: usize) -> Vec<usize> {
        (0..self.layers()).filter(|&l| self.column_leading_zeros(l) == k).collect()
    }

    /// Whether the layer/eigen-channel factor graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let (n, l) = (self.n(), self.layers());
        let mut parent: Vec<usize> = (0..n + l).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (c, sup) in self.supports.iter().enumerate() {
            for &m in sup {
                let (a, b) = (find(&mut parent, m), find(&mut parent, n + c));
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }

    /// Text form: `"n L"` then `n` rows of `L` space-separated bits.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|s| !s.is_empty() && !s.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty SL matrix file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        let [n, l] = dims[..] else {
            return Err(Error::Parse("header must be \"n L\"".into()));
        };
        let rows: Vec<Vec<u8>> = lines
            .map(|line| {
                line.split_whitespace()
                    .map(|x| x.parse::<u8>().map_err(|e| Error::Parse(format!("entry {x:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.len() != n || rows.iter().any(|r| r.len() != l) {
            return Err(Error::Parse(format!("expected {n} rows of {l} entries")));
        }
        Self::new(rows)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n(), self.layers());
        for r in &self.a {
            let row: Vec<String> = r.iter().map(u8::to_string).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Alias kept for callers that prefer a free function.
pub fn analyze_matrix(rows: Vec<Vec<u8>>) -> Result<SlMatrix> {
    SlMatrix::new(rows)
}

/// Layering matrices used throughout the examples and tests.
pub mod catalog {
    use super::SlMatrix;

    fn build(rows: &[&[u8]]) -> SlMatrix {
        SlMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).expect("catalog matrix is valid")
    }

    /// Regular 4 x 6 matrix (`n_l = 2`, `d_m = 3`, `N = 2`).
    pub fn regular_4x6() -> SlMatrix {
        build(&[&[1, 1, 1, 0, 0, 0], &[1, 0, 0, 1, 1, 0], &[0, 1, 0, 1, 0, 1], &[0, 0, 1, 0, 1, 1]])
    }

    /// X-shaped pairing of four eigen-channels.
    pub fn x_shaped_4() -> SlMatrix {
        build(&[&[1, 0, 0, 1], &[0, 1, 1, 0], &[0, 1, 1, 0], &[1, 0, 0, 1]])
    }

    /// Y-shaped pairing of four eigen-channels; its factor graph is a forest.
    pub fn y_shaped_4() -> SlMatrix {
        build(&[&[1, 0, 0, 1], &[0, 1, 1, 0], &[0, 1, 0, 0], &[1, 0, 0, 0]])
    }

    /// 4 x 4 with three layers overlapping on the strongest eigen-channel.
    pub fn overlapped_4x4() -> SlMatrix {
        build(&[&[1, 1, 1, 0], &[1, 0, 0, 1], &[0, 1, 0, 1], &[0, 0, 1, 0]])
    }

    /// 4 x 4 with every eigen-channel shared by two layers.
    pub fn paired_4x4() -> SlMatrix {
        build(&[&[1, 1, 0, 0], &[0, 0, 1, 1], &[1, 0, 0, 1], &[0, 1, 1, 0]])
    }

    /// 6 x 6 counterpart of [`overlapped_4x4`] (the weakest eigen-channel is idle).
    pub fn overlapped_6x6() -> SlMatrix {
        build(&[
            &[1, 1, 1, 0, 0, 0],
            &[0, 0, 0, 1, 1, 1],
            &[0, 0, 1, 0, 0, 1],
            &[0, 1, 0, 0, 1, 0],
            &[1, 0, 0, 1, 0, 0],
            &[0, 0, 0, 0, 0, 0],
        ])
    }

    /// 6 x 6 counterpart of [`paired_4x4`].
    pub fn paired_6x6() -> SlMatrix {
        build(&[
            &[1, 1, 0, 0, 0, 0],
            &[0, 0, 1, 1, 0, 0],
            &[0, 0, 0, 0, 1, 1],
            &[0, 0, 0, 1, 1, 0],
            &[0, 1, 1, 0, 0, 0],
            &[1, 0, 0, 0, 0, 1],
        ])
    }

    pub fn identity(n: usize) -> SlMatrix {
        SlMatrix::new((0..n).map(|r| (0..n).map(|c| u8::from(r == c)).collect()).collect())
            .expect("identity is valid")
    }

    /// Looks a matrix up by its catalog name.
    pub fn by_name(name: &str) -> Option<SlMatrix> {
        Some(match name {
            "regular_4x6" => regular_4x6(),
            "x_shaped_4" => x_shaped_4(),
            "y_shaped_4" => y_shaped_4(),
            "overlapped_4x4" => overlapped_4x4(),
            "paired_4x4" => paired_4x4(),
            "overlapped_6x6" => overlapped_6x6(),
            "paired_6x6" => paired_6x6(),
            _ => return None,
        })
    }
}

/// Number of leading (near-)zero entries of a nonzero vector.
pub fn leading_zeros(psi: &[Complex64]) -> Result<usize> {
    psi.iter()
        .position(|z| z.norm() > ZERO_THRESHOLD)
        .ok_or_else(|| Error::InvalidInput("leading-zero count of an all-zero vector".into()))
}

/// Shortened codebook of one layer: `M` words of length `n_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub layer: usize,
    /// Eigen-channels (0-based, ascending) carrying this layer.
    pub support: Vec<usize>,
    pub words: Vec<Vec<Complex64>>,
    /// Average word energy `E_s`.
    pub energy: f64,
}

impl Codebook {
    pub fn new(layer: usize, support: Vec<usize>, words: Vec<Vec<Complex64>>, energy: f64) -> Result<Self> {
        let cb = Self { layer, support, words, energy };
        cb.validate()?;
        Ok(cb)
    }

    pub fn m(&self) -> usize {
        self.words.len()
    }

    pub fn mean_energy(&self) -> f64 {
        self.words.iter().map(|w| w.iter().map(Complex64::norm_sqr).sum::<f64>()).sum::<f64>() / self.m() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::InvalidInput(format!("layer {}: {msg}", self.layer + 1));
        if self.words.is_empty() {
            return Err(ctx("empty codebook".into()));
        }
        if let Some(w) = self.words.iter().find(|w| w.len() != self.support.len()) {
            return Err(ctx(format!("word length {} does not match support size {}", w.len(), self.support.len())));
        }
        if self.words.iter().flatten().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ctx("non-finite symbol".into()));
        }
        let e = self.mean_energy();
        if (e - self.energy).abs() > 1e-9 * self.energy.max(1.0) {
            return Err(ctx(format!("mean energy {e} differs from declared {}", self.energy)));
        }
        for i in 0..self.m() {
            for j in 0..i {
                if key_of(&self.words[i]) == key_of(&self.words[j]) {
                    return Err(ctx(format!("words {} and {} coincide", j + 1, i + 1)));
                }
            }
        }
        Ok(())
    }
}

/// One codebook per layer, all of the same size `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    books: Vec<Codebook>,
}

impl CodebookSet {
    pub fn new(sl: &SlMatrix, books: Vec<Codebook>) -> Result<Self> {
        if books.len() != sl.layers() {
            return Err(Error::DimensionMismatch { expected: sl.layers(), got: books.len() });
        }
        let m = books[0].m();
        for (l, b) in books.iter().enumerate() {
            b.validate()?;
            if b.layer != l {
                return Err(Error::InvalidInput(format!("codebook {} is labelled layer {}", l + 1, b.layer + 1)));
            }
            if b.support != sl.support(l) {
                return Err(Error::InvalidInput(format!(
                    "layer {}: codebook support {:?} does not match the SL matrix {:?}",
                    l + 1,
                    b.support,
                    sl.support(l)
                )));
            }
            if b.m() != m {
                return Err(Error::InvalidInput("all codebooks must have the same size".into()));
            }
        }
        Ok(Self { books })
    }

    pub fn m(&self) -> usize {
        self.books[0].m()
    }

    pub fn layers(&self) -> usize {
        self.books.len()
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    pub fn book(&self, l: usize) -> &Codebook {
        &self.books[l]
    }

    /// `M^L`, or `None` on overflow.
    pub fn num_words(&self) -> Option<u128> {
        (self.m() as u128).checked_pow(self.layers() as u32)
    }

    pub fn to_json(&self) -> String {
        let file = CodebookFile {
            m: self.m(),
            layers: self
                .books
                .iter()
                .map(|b| LayerEntry {
                    support: b.support.iter().map(|m| m + 1).collect(),
                    energy: b.energy,
                    words: b.words.iter().map(|w| w.iter().map(|z| [z.re, z.im]).collect()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("codebooks serialize")
    }

    pub fn from_json(sl: &SlMatrix, text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let books = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, e)| {
                if e.support.contains(&0) {
                    return Err(Error::Parse(format!("layer {}: support indices are 1-based", l + 1)));
                }
                Codebook::new(
                    l,
                    e.support.iter().map(|m| m - 1).collect(),
                    e.words.iter().map(|w| w.iter().map(|p| Complex64::new(p[0], p[1])).collect()).collect(),
                    e.energy,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let set = Self::new(sl, books)?;
        if set.m() != file.m {
            return Err(Error::Parse(format!("declared M = {} but codebooks have {} words", file.m, set.m())));
        }
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    m: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    support: Vec<usize>,
    energy: f64,
    words: Vec<Vec<[f64; 2]>>,
}

/// Superposed symbol vector for one codeword index per layer.
pub fn superpose(sl: &SlMatrix, choices: &[usize], books: &CodebookSet) -> Result<Vec<Complex64>> {
    if choices.len() != books.layers() {
        return Err(Error::DimensionMismatch { expected: books.layers(), got: choices.len() });
    }
    if let Some((l, &c)) = choices.iter().enumerate().find(|(_, &c)| c >= books.m()) {
        return Err(Error::InvalidInput(format!("layer {}: codeword index {c} out of range", l + 1)));
    }
    let mut s = vec![Complex64::new(0.0, 0.0); sl.n()];
    superpose_into(books, choices, &mut s);
    Ok(s)
}

/// Unchecked [`superpose`] writing into `out` (hot loops).
pub fn superpose_into(books: &CodebookSet, choices: &[usize], out: &mut [Complex64]) {
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for (b, &c) in books.books.iter().zip(choices) {
        for (&m, &x) in b.support.iter().zip(&b.words[c]) {
            out[m] += x;
        }
    }
}

fn round_key(x: f64) -> i64 {
    (x * 1e12).round() as i64
}

fn key_of(v: &[Complex64]) -> Vec<i64> {
    v.iter().flat_map(|z| [round_key(z.re), round_key(z.im)]).collect()
}

/// A pair of layer tuples that collide on one eigen-channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignCheck {
    pub passed: bool,
    pub witness: Option<Witness>,
    /// False when at least one channel was only sampled.
    pub exhaustive: bool,
    /// Random pairs drawn on sampled channels.
    pub sampled_pairs: u64,
    pub seed: u64,
}

/// Channels with more interfering-codeword combinations than this are sampled
/// rather than hashed exhaustively.
pub const DESIGN_CHECK_CAP: u128 = 1 << 22;
pub const DESIGN_CHECK_SAMPLES: u64 = 10_000_000;

/// Verifies that on every eigen-channel `m` the sum `s_m` determines the
/// codewords of all layers in `D_m`, i.e. two layer tuples that differ
/// somewhere in `D_m` never produce the same `s_m`.
pub fn check_design_condition(sl: &SlMatrix, books: &CodebookSet) -> DesignCheck {
    check_design_condition_with(sl, books, DESIGN_CHECK_CAP, DESIGN_CHECK_SAMPLES, 0)
}

pub fn check_design_condition_with(
    sl: &SlMatrix,
    books: &CodebookSet,
    cap: u128,
    samples: u64,
    seed: u64,
) -> DesignCheck {
    let m_size = books.m();
    let mut exhaustive = true;
    let mut sampled_pairs = 0;
    let symbol = |l: usize, c: usize, m: usize| -> Complex64 {
        let b = books.book(l);
        let pos = b.support.iter().position(|&x| x == m).expect("layer uses channel");
        b.words[c][pos]
    };
    let tuple = |layers: &[usize], digits: &[usize]| -> Vec<usize> {
        let mut t = vec![0; books.layers()];
        for (&l, &d) in layers.iter().zip(digits) {
            t[l] = d;
        }
        t
    };
    for m in 0..sl.n() {
        let layers = sl.interferers(m);
        if layers.is_empty() {
            continue;
        }
        let combos = (m_size as u128).checked_pow(layers.len() as u32);
        let sum = |digits: &[usize]| -> Complex64 { layers.iter().zip(digits).map(|(&l, &d)| symbol(l, d, m)).sum() };
        if combos.is_some_and(|c| c <= cap) {
            let mut seen: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
            let mut digits = vec![0usize; layers.len()];
            loop {
                let s = sum(&digits);
                let k = (round_key(s.re), round_key(s.im));
                if let Some(prev) = seen.get(&k) {
                    return DesignCheck {
                        passed: false,
                        witness: Some(Witness { first: tuple(layers, prev), second: tuple(layers, &digits), channel: m }),
                        exhaustive,
                        sampled_pairs,
                        seed,
                    };
                }
                seen.insert(k, digits.clone());
                if !increment(&mut digits, m_size) {
                    break;
                }
            }
        } else {
            exhaustive = false;
            let mut r = rng::stream(seed, &[m as u64]);
            for _ in 0..samples {
                let a: Vec<usize> = (0..layers.len()).map(|_| r.random_range(0..m_size)).collect();
                let b: Vec<usize> = (0..layers.len()).map(|_| r.random_range(0..m_size)).collect();
                sampled_pairs += 1;
                if a == b {
                    continue;
                }
                let (sa, sb) = (sum(&a), sum(&b));
                if round_key(sa.re) == round_key(sb.re) && round_key(sa.im) == round_key(sb.im) {
                    return DesignCheck {
                        passed: false,
                        witness: Some(Witness { first: tuple(layers, &a), second: tuple(layers, &b), channel: m }),
                        exhaustive,
                        sampled_pairs,
                        seed,
                    };
                }
            }
        }
    }
    DesignCheck { passed: true, witness: None, exhaustive, sampled_pairs, seed }
}

/// Odometer increment; returns false after the last combination.
pub(crate) fn increment(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// One distinct difference vector with the number of ordered word pairs
/// `(s, ŝ)` producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffVector {
    pub psi: Vec<Complex64>,
    pub multiplicity: u64,
    pub leading_zeros: usize,
}

/// All nonzero differences `s - ŝ` over the superposed alphabet.
#[derive(Debug, Clone)]
pub struct DifferenceSet {
    pub n: usize,
    /// `M^L`, the number of superposed words.
    pub num_words: f64,
    pub vectors: Vec<DiffVector>,
}

impl DifferenceSet {
    /// Vectors with at least `k` leading zeros (`E_{k}` cumulative).
    pub fn with_leading_zeros_at_least(&self, k: usize) -> impl Iterator<Item = &DiffVector> {
        self.vectors.iter().filter(move |v| v.leading_zeros >= k)
    }

    /// Indices of vectors grouped by leading-zero count.
    pub fn by_leading_zeros(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vectors.iter().enumerate() {
            map.entry(v.leading_zeros).or_default().push(i);
        }
        map
    }

    pub fn max_leading_zeros(&self) -> usize {
        self.vectors.iter().map(|v| v.leading_zeros).max().unwrap_or(0)
    }

    /// Ordered pairs of distinct words, `M^L (M^L - 1)`.
    pub fn total_pairs(&self) -> u64 {
        self.vectors.iter().map(|v| v.multiplicity).sum()
    }

    pub fn restrict(&self, k: usize) -> DifferenceSet {
        DifferenceSet {
            n: self.n,
            num_words: self.num_words,
            vectors: self.with_leading_zeros_at_least(k).cloned().collect(),
        }
    }
}

/// Default cap on intermediate work (partial vectors times per-layer
/// differences) when enumerating a difference set.
pub const DIFFERENCE_SET_CAP: u128 = 50_000_000;

pub fn difference_set(books: &CodebookSet, sl: &SlMatrix) -> Result<DifferenceSet> {
    difference_set_with_cap(books, sl, DIFFERENCE_SET_CAP)
}

type Key = [i64; 2 * MAX_DIM];

/// Enumerates `E` by convolving per-layer difference lists; each layer's
/// zero difference carries multiplicity `M`.
pub fn difference_set_with_cap(books: &CodebookSet, sl: &SlMatrix, cap: u128) -> Result<DifferenceSet> {
    let n = sl.n();
    if n > MAX_DIM {
        return Err(Error::TooLarge { what: "eigen-channel count", count: n as u128, cap: MAX_DIM as u128 });
    }
    let m = books.m();
    let zero = Complex64::new(0.0, 0.0);
    let key = |v: &[Complex64; MAX_DIM]| -> Key {
        let mut k = [0i64; 2 * MAX_DIM];
        for i in 0..n {
            k[2 * i] = round_key(v[i].re);
            k[2 * i + 1] = round_key(v[i].im);
        }
        k
    };

    let mut acc: Vec<([Complex64; MAX_DIM], u64)> = vec![([zero; MAX_DIM], 1)];
    for b in books.books() {
        // Distinct differences of this layer, embedded on its support.
        let mut layer: Vec<([Complex64; MAX_DIM], u64)> = Vec::new();
        let mut index: HashMap<Key, usize> = HashMap::new();
        for i in 0..m {
            for j in 0..m {
                let mut d = [zero; MAX_DIM];
                for (p, &ch) in b.support.iter().enumerate() {
                    d[ch] = b.words[i][p] - b.words[j][p];
                }
                let k = key(&d);
                match index.get(&k) {
                    Some(&ix) => layer[ix].1 += 1,
                    None => {
                        index.insert(k, layer.len());
                        layer.push((d, 1));
                    }
                }
            }
        }
        let work = acc.len() as u128 * layer.len() as u128;
        if work > cap {
            return Err(Error::TooLarge { what: "difference-set enumeration", count: work, cap });
        }
        let mut next: Vec<([Complex64; MAX_DIM], u64)> = Vec::new();
        let mut index: HashMap<Key, usize> = HashMap::with_capacity(acc.len());
        for (v, c) in &acc {
            for (d, e) in &layer {
                let mut s = *v;
                for i in 0..n {
                    s[i] += d[i];
                }
                let k = key(&s);
                match index.get(&k) {
                    Some(&ix) => next[ix].1 += c * e,
                    None => {
                        index.insert(k, next.len());
                        next.push((s, c * e));
                    }
                }
            }
        }
        acc = next;
    }

    let words = books
        .num_words()
        .and_then(|w| u64::try_from(w).ok())
        .ok_or(Error::TooLarge { what: "superposed alphabet", count: u128::MAX, cap: u64::MAX as u128 })?;
    let zero_key = [0i64; 2 * MAX_DIM];
    let mut vectors = Vec::with_capacity(acc.len());
    for (v, c) in acc {
        if key(&v) == zero_key {
            if c != words {
                return Err(Error::DesignCondition(format!(
                    "{} ordered pairs of distinct layer tuples superpose to the same word",
                    c - words
                )));
            }
            continue;
        }
        let psi = v[..n].to_vec();
        let leading_zeros = leading_zeros(&psi)?;
        vectors.push(DiffVector { psi, multiplicity: c, leading_zeros });
    }
    Ok(DifferenceSet { n, num_words: words as f64, vectors })
}
