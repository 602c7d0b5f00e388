//! Maximum-likelihood, exact-marginal and message-passing detection on the
//! eigen-domain observation `z_m = sqrt(λ_m) s_m + n'_m`.
//!
//! Each eigen-channel `m` is a factor over the layers in `D_m`; its likelihood
//! table `P(z_m | S_m)` has `M^{d_m}` entries, indexed with the first layer of
//! `D_m` as the most significant digit.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sl::{increment, CodebookSet, SlMatrix};

/// Largest `M^L` accepted by the exhaustive detectors.
pub const EXHAUSTIVE_CAP: u128 = 1 << 24;
/// Largest per-channel table `M^{d_m}`.
pub const FACTOR_CAP: u128 = 1 << 20;

/// Everything a detector needs for one received word.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub z: &'a [Complex64],
    pub lambdas: &'a [f64],
    pub n0: f64,
    pub sl: &'a SlMatrix,
    pub books: &'a CodebookSet,
}

#[derive(Debug, Clone)]
struct ChannelFactor {
    channel: usize,
    layers: Vec<usize>,
    /// Edge id of each layer in `layers`.
    edges: Vec<usize>,
    /// Superposed symbol `s_m` for each table index.
    symbols: Vec<Complex64>,
}

/// Precomputed factor-graph structure for one (SL matrix, codebooks) pair.
#[derive(Debug, Clone)]
pub struct SystemModel {
    n: usize,
    layers: usize,
    m: usize,
    factors: Vec<ChannelFactor>,
    /// Edge ids of each layer, in the order of its support.
    layer_edges: Vec<Vec<usize>>,
    num_edges: usize,
    /// For each layer: (factor index, digit weight) pairs.
    layer_weights: Vec<Vec<(usize, usize)>>,
}

impl SystemModel {
    pub fn new(sl: &SlMatrix, books: &CodebookSet) -> Result<Self> {
        if books.layers() != sl.layers() {
            return Err(Error::DimensionMismatch { expected: sl.layers(), got: books.layers() });
        }
        let m = books.m();
        let mut factors = Vec::new();
        let mut layer_edges = vec![Vec::new(); sl.layers()];
        let mut layer_weights = vec![Vec::new(); sl.layers()];
        let mut num_edges = 0;
        for ch in 0..sl.n() {
            let layers = sl.interferers(ch).to_vec();
            if layers.is_empty() {
                continue;
            }
            let size = (m as u128).checked_pow(layers.len() as u32).filter(|&s| s <= FACTOR_CAP).ok_or(
                Error::TooLarge { what: "channel factor table", count: (m as u128).saturating_pow(layers.len() as u32), cap: FACTOR_CAP },
            )? as usize;
            let fi = factors.len();
            let edges: Vec<usize> = (0..layers.len()).map(|k| num_edges + k).collect();
            num_edges += layers.len();
            for (k, &l) in layers.iter().enumerate() {
                layer_edges[l].push(edges[k]);
                layer_weights[l].push((fi, m.pow((layers.len() - 1 - k) as u32)));
            }
            let coords: Vec<usize> = layers
                .iter()
                .map(|&l| books.book(l).support.iter().position(|&x| x == ch).expect("support matches SL matrix"))
                .collect();
            let mut symbols = Vec::with_capacity(size);
            let mut digits = vec![0usize; layers.len()];
            loop {
                let s: Complex64 =
                    layers.iter().zip(&digits).zip(&coords).map(|((&l, &d), &p)| books.book(l).words[d][p]).sum();
                symbols.push(s);
                if !increment(&mut digits, m) {
                    break;
                }
            }
            factors.push(ChannelFactor { channel: ch, layers, edges, symbols });
        }
        Ok(Self { n: sl.n(), layers: sl.layers(), m, factors, layer_edges, num_edges, layer_weights })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// `Σ_m d_m M^{d_m}`: channel-update work of one message-passing iteration.
    pub fn ops_per_iteration(&self) -> u64 {
        self.factors.iter().map(|f| (f.layers.len() * f.symbols.len()) as u64).sum()
    }

    fn check(&self, z: &[Complex64], lambdas: &[f64], n0: f64) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: z.len() });
        }
        if lambdas.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: lambdas.len() });
        }
        if !(n0 > 0.0) {
            return Err(Error::InvalidInput("noise level must be positive".into()));
        }
        Ok(())
    }

    /// Squared distances `|z_m - sqrt(λ_m) s_m|²` per factor and table index.
    fn metrics(&self, z: &[Complex64], lambdas: &[f64], out: &mut Vec<Vec<f64>>) {
        out.resize_with(self.factors.len(), Vec::new);
        for (f, row) in self.factors.iter().zip(out.iter_mut()) {
            let g = lambdas[f.channel].sqrt();
            let zm = z[f.channel];
            row.clear();
            row.extend(f.symbols.iter().map(|s| (zm - s * g).norm_sqr()));
        }
    }

    fn exhaustive_size(&self) -> Result<usize> {
        (self.m as u128)
            .checked_pow(self.layers as u32)
            .filter(|&c| c <= EXHAUSTIVE_CAP)
            .map(|c| c as usize)
            .ok_or(Error::TooLarge {
                what: "superposed alphabet",
                count: (self.m as u128).saturating_pow(self.layers as u32),
                cap: EXHAUSTIVE_CAP,
            })
    }

    /// Visits every layer tuple in lexicographic order with its total metric.
    fn enumerate(&self, tables: &[Vec<f64>], mut visit: impl FnMut(&[usize], f64)) {
        let mut digits = vec![0usize; self.layers];
        let mut idx = vec![0usize; self.factors.len()];
        loop {
            let metric: f64 = tables.iter().zip(&idx).map(|(t, &i)| t[i]).sum();
            visit(&digits, metric);
            // Odometer step with incremental table indices.
            let mut l = self.layers;
            loop {
                if l == 0 {
                    return;
                }
                l -= 1;
                let old = digits[l];
                let new = if old + 1 < self.m { old + 1 } else { 0 };
                digits[l] = new;
                for &(fi, w) in &self.layer_weights[l] {
                    idx[fi] = idx[fi] + new * w - old * w;
                }
                if new != 0 {
                    break;
                }
            }
        }
    }

    /// ML decision; ties go to the lexicographically smallest tuple.
    pub fn ml(&self, z: &[Complex64], lambdas: &[f64], n0: f64) -> Result<Vec<usize>> {
        self.check(z, lambdas, n0)?;
        self.exhaustive_size()?;
        let mut tables = Vec::new();
        self.metrics(z, lambdas, &mut tables);
        let mut best = f64::INFINITY;
        let mut arg = vec![0; self.layers];
        self.enumerate(&tables, |d, metric| {
            if metric < best {
                best = metric;
                arg.copy_from_slice(d);
            }
        });
        Ok(arg)
    }

    /// Posterior `P(s_l = w | z)` for every layer under a uniform prior.
    pub fn marginals(&self, z: &[Complex64], lambdas: &[f64], n0: f64) -> Result<Vec<Vec<f64>>> {
        self.check(z, lambdas, n0)?;
        let size = self.exhaustive_size()?;
        let mut tables = Vec::new();
        self.metrics(z, lambdas, &mut tables);
        let mut all = Vec::with_capacity(size);
        self.enumerate(&tables, |_, metric| all.push(metric));
        let min = all.iter().copied().fold(f64::INFINITY, f64::min);
        let mut post = vec![vec![0.0; self.m]; self.layers];
        let mut digits = vec![0usize; self.layers];
        for &metric in &all {
            let p = (-(metric - min) / n0).exp();
            for (l, &d) in digits.iter().enumerate() {
                post[l][d] += p;
            }
            increment(&mut digits, self.m);
        }
        for row in &mut post {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        Ok(post)
    }

    pub fn mp(&self, z: &[Complex64], lambdas: &[f64], n0: f64, opts: &MpOptions, ws: &mut MpWorkspace) -> Result<MpOutput> {
        let mut out = None;
        self.mp_run(z, lambdas, n0, opts, ws, |t, dec, beliefs| {
            if t == opts.iterations {
                out = Some((dec.to_vec(), beliefs.to_vec()));
            }
        })?;
        let (decisions, beliefs) = out.expect("at least one iteration");
        Ok(MpOutput { decisions, beliefs, iterations: opts.iterations, ops: self.ops_per_iteration() * opts.iterations as u64 })
    }

    /// Runs `opts.iterations` flooding iterations, reporting decisions and
    /// beliefs after each one (`t` counts from 1).
    pub fn mp_run(
        &self,
        z: &[Complex64],
        lambdas: &[f64],
        n0: f64,
        opts: &MpOptions,
        ws: &mut MpWorkspace,
        mut after: impl FnMut(usize, &[usize], &[Vec<f64>]),
    ) -> Result<()> {
        self.check(z, lambdas, n0)?;
        if opts.iterations == 0 {
            return Err(Error::InvalidInput("message passing needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&opts.damping) {
            return Err(Error::InvalidInput("damping must lie in [0, 1)".into()));
        }
        let m = self.m;
        self.metrics(z, lambdas, &mut ws.tables);
        // Log-likelihoods shifted so that each factor's maximum is 0.
        for row in ws.tables.iter_mut() {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            row.iter_mut().for_each(|x| *x = -(*x - min) / n0);
        }
        ws.lik.resize_with(ws.tables.len(), Vec::new);
        for (lik, row) in ws.lik.iter_mut().zip(&ws.tables) {
            lik.clear();
            lik.extend(row.iter().map(|x| x.exp()));
        }
        let e = self.num_edges;
        ws.c2l.clear();
        ws.c2l.resize(e * m, 1.0 / m as f64);
        ws.l2c.clear();
        ws.l2c.resize(e * m, 1.0 / m as f64);
        ws.beliefs.resize_with(self.layers, Vec::new);
        ws.decisions.resize(self.layers, 0);

        for t in 1..=opts.iterations {
            for (fi, f) in self.factors.iter().enumerate() {
                channel_update(f, &ws.lik[fi], &ws.tables[fi], &ws.l2c, &mut ws.c2l, m, opts.damping, &mut ws.scratch);
            }
            for (l, edges) in self.layer_edges.iter().enumerate() {
                for (k, &eo) in edges.iter().enumerate() {
                    let dst = &mut ws.scratch;
                    dst.clear();
                    dst.resize(m, 1.0);
                    for (j, &ei) in edges.iter().enumerate() {
                        if j != k {
                            for w in 0..m {
                                dst[w] *= ws.c2l[ei * m + w];
                            }
                        }
                    }
                    if !normalize(dst) {
                        log_product(edges, Some(k), &ws.c2l, m, dst);
                    }
                    ws.l2c[eo * m..(eo + 1) * m].copy_from_slice(dst);
                }
                let b = &mut ws.beliefs[l];
                b.clear();
                b.resize(m, 1.0);
                for &ei in edges {
                    for w in 0..m {
                        b[w] *= ws.c2l[ei * m + w];
                    }
                }
                if !normalize(b) {
                    log_product(edges, None, &ws.c2l, m, b);
                }
                ws.decisions[l] = argmax(b);
            }
            after(t, &ws.decisions, &ws.beliefs);
        }
        Ok(())
    }
}

/// Marginalises one channel factor onto each of its layers (sum-product).
#[allow(clippy::too_many_arguments)]
fn channel_update(
    f: &ChannelFactor,
    lik: &[f64],
    loglik: &[f64],
    l2c: &[f64],
    c2l: &mut [f64],
    m: usize,
    damping: f64,
    scratch: &mut Vec<f64>,
) {
    let d = f.layers.len();
    scratch.clear();
    scratch.resize(d * m, 0.0);
    let mut digits = vec![0usize; d];
    let mut inc = vec![0.0; d];
    for &p in lik {
        for k in 0..d {
            inc[k] = l2c[f.edges[k] * m + digits[k]];
        }
        for k in 0..d {
            let mut v = p;
            for (j, &x) in inc.iter().enumerate() {
                if j != k {
                    v *= x;
                }
            }
            scratch[k * m + digits[k]] += v;
        }
        increment(&mut digits, m);
    }
    for k in 0..d {
        let msg = &mut scratch[k * m..(k + 1) * m];
        if !normalize(msg) {
            log_channel_message(f, loglik, l2c, m, k, msg);
        }
        let dst = &mut c2l[f.edges[k] * m..(f.edges[k] + 1) * m];
        if damping > 0.0 {
            for (o, n) in dst.iter_mut().zip(msg.iter()) {
                *o = damping * *o + (1.0 - damping) * n;
            }
        } else {
            dst.copy_from_slice(msg);
        }
    }
}

/// Log-domain recomputation of one channel-to-layer message after underflow.
fn log_channel_message(f: &ChannelFactor, loglik: &[f64], l2c: &[f64], m: usize, k: usize, out: &mut [f64]) {
    let d = f.layers.len();
    let mut acc = vec![f64::NEG_INFINITY; m];
    let mut digits = vec![0usize; d];
    for &ll in loglik {
        let mut v = ll;
        for j in 0..d {
            if j != k {
                v += l2c[f.edges[j] * m + digits[j]].ln();
            }
        }
        let a = &mut acc[digits[k]];
        *a = log_add(*a, v);
        increment(&mut digits, m);
    }
    from_log(&acc, out);
}

fn log_product(edges: &[usize], skip: Option<usize>, c2l: &[f64], m: usize, out: &mut [f64]) {
    let mut acc = vec![0.0; m];
    for (j, &ei) in edges.iter().enumerate() {
        if Some(j) != skip {
            for w in 0..m {
                acc[w] += c2l[ei * m + w].ln();
            }
        }
    }
    from_log(&acc, out);
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn from_log(acc: &[f64], out: &mut [f64]) {
    let mx = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|x| *x = u);
        return;
    }
    for (o, &a) in out.iter_mut().zip(acc) {
        *o = (a - mx).exp();
    }
    normalize(out);
}

/// Scales to unit sum; false if the sum is zero or not finite.
fn normalize(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= s);
    true
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpOptions {
    pub iterations: usize,
    /// Weight of the previous channel-to-layer message (0 disables damping).
    pub damping: f64,
}

impl MpOptions {
    pub fn new(iterations: usize) -> Self {
        Self { iterations, damping: 0.0 }
    }
}

/// Reusable buffers for [`SystemModel::mp_run`].
#[derive(Debug, Default, Clone)]
pub struct MpWorkspace {
    tables: Vec<Vec<f64>>,
    lik: Vec<Vec<f64>>,
    c2l: Vec<f64>,
    l2c: Vec<f64>,
    beliefs: Vec<Vec<f64>>,
    decisions: Vec<usize>,
    scratch: Vec<f64>,
}

impl MpWorkspace {
    /// Current channel-to-layer messages, `[edge][codeword]` flattened.
    pub fn channel_to_layer(&self) -> &[f64] {
        &self.c2l
    }

    /// Current layer-to-channel messages, `[edge][codeword]` flattened.
    pub fn layer_to_channel(&self) -> &[f64] {
        &self.l2c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpOutput {
    pub decisions: Vec<usize>,
    /// Normalized per-layer beliefs after the last iteration.
    pub beliefs: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Channel-update operations performed (`Σ_m d_m M^{d_m}` per iteration).
    pub ops: u64,
}

pub fn ml_detect(inp: &DetectorInput) -> Result<Vec<usize>> {
    SystemModel::new(inp.sl, inp.books)?.ml(inp.z, inp.lambdas, inp.n0)
}

pub fn exact_marginals(inp: &DetectorInput) -> Result<Vec<Vec<f64>>> {
    SystemModel::new(inp.sl, inp.books)?.marginals(inp.z, inp.lambdas, inp.n0)
}

pub fn mp_detect(inp: &DetectorInput, mp_iters: usize) -> Result<MpOutput> {
    SystemModel::new(inp.sl, inp.books)?.mp(inp.z, inp.lambdas, inp.n0, &MpOptions::new(mp_iters), &mut MpWorkspace::default())
}

/// Per-iteration beliefs as CSV: `iteration,layer,codeword,belief`
/// (layers and codewords 1-based).
pub fn belief_trace_csv(model: &SystemModel, inp: &DetectorInput, opts: &MpOptions) -> Result<String> {
    let mut s = String::from("iteration,layer,codeword,belief\n");
    model.mp_run(inp.z, inp.lambdas, inp.n0, opts, &mut MpWorkspace::default(), |t, _, beliefs| {
        for (l, b) in beliefs.iter().enumerate() {
            for (w, p) in b.iter().enumerate() {
                let _ = writeln!(s, "{t},{},{},{p:.12e}", l + 1, w + 1);
            }
        }
    })?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, stream};
    use crate::sl::{catalog, superpose, Codebook};

    fn qpsk_books(sl: &SlMatrix) -> CodebookSet {
        // Distinct per-layer scalings and rotations keep every channel separable.
        let h = 0.5f64.sqrt();
        let base = [Complex64::new(h, h), Complex64::new(-h, h), Complex64::new(-h, -h), Complex64::new(h, -h)];
        let books = (0..sl.layers())
            .map(|l| {
                let n_l = sl.n_l(l);
                let rot = Complex64::from_polar(1.0, 0.37 * l as f64);
                let words: Vec<Vec<Complex64>> = base
                    .iter()
                    .map(|&x| (0..n_l).map(|j| x * rot * Complex64::from_polar(1.0, 0.21 * j as f64) / (n_l as f64).sqrt()).collect())
                    .collect();
                Codebook::new(l, sl.support(l).to_vec(), words, 1.0).unwrap()
            })
            .collect();
        CodebookSet::new(sl, books).unwrap()
    }

    fn observe(sl: &SlMatrix, books: &CodebookSet, tx: &[usize], lambdas: &[f64], n0: f64, seed: u64) -> Vec<Complex64> {
        let s = superpose(sl, tx, books).unwrap();
        let mut r = stream(seed, &[]);
        s.iter().zip(lambdas).map(|(x, l)| x * l.sqrt() + complex_gaussian(&mut r, n0)).collect()
    }

    #[test]
    fn noiseless_ml_recovers_transmitted_word() {
        let sl = catalog::regular_4x6();
        let books = qpsk_books(&sl);
        let lambdas = [9.0, 4.0, 2.0, 0.5];
        let tx = [3, 1, 0, 2, 2, 1];
        let z = observe(&sl, &books, &tx, &lambdas, 1e-30, 1);
        let inp = DetectorInput { z: &z, lambdas: &lambdas, n0: 1e-3, sl: &sl, books: &books };
        assert_eq!(ml_detect(&inp).unwrap(), tx);
        assert_eq!(mp_detect(&inp, 5).unwrap().decisions, tx);
    }

    #[test]
    fn single_layer_mp_equals_ml() {
        let sl = SlMatrix::new(vec![vec![1], vec![1]]).unwrap();
        let books = qpsk_books(&sl);
        let lambdas = [2.0, 0.7];
        for seed in 0..50 {
            let z = observe(&sl, &books, &[seed as usize % 4], &lambdas, 0.8, seed);
            let inp = DetectorInput { z: &z, lambdas: &lambdas, n0: 0.8, sl: &sl, books: &books };
            for it in [1, 3] {
                assert_eq!(mp_detect(&inp, it).unwrap().decisions, ml_detect(&inp).unwrap());
            }
        }
    }

    #[test]
    fn symmetric_posterior() {
        let sl = SlMatrix::new(vec![vec![1]]).unwrap();
        let b = Codebook::new(0, vec![0], vec![vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(-1.0, 0.0)]], 1.0).unwrap();
        let books = CodebookSet::new(&sl, vec![b]).unwrap();
        let z = [Complex64::new(0.0, 0.3)];
        let inp = DetectorInput { z: &z, lambdas: &[1.0], n0: 1.0, sl: &sl, books: &books };
        let p = exact_marginals(&inp).unwrap();
        assert!((p[0][0] - 0.5).abs() < 1e-15);
        assert_eq!(ml_detect(&inp).unwrap(), vec![0]);
    }

    #[test]
    fn messages_stay_normalized_and_ops_are_counted() {
        let sl = catalog::regular_4x6();
        let books = qpsk_books(&sl);
        let model = SystemModel::new(&sl, &books).unwrap();
        assert_eq!(model.ops_per_iteration(), 4 * 3 * 64);
        let lambdas = [9.0, 4.0, 2.0, 0.5];
        let z = observe(&sl, &books, &[0, 1, 2, 3, 0, 1], &lambdas, 0.1, 3);
        let mut ws = MpWorkspace::default();
        let out = model.mp(&z, &lambdas, 0.1, &MpOptions::new(4), &mut ws).unwrap();
        assert_eq!(out.ops, 4 * 768);
        for msgs in [ws.channel_to_layer(), ws.layer_to_channel()] {
            for chunk in msgs.chunks(4) {
                assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_snr_does_not_underflow() {
        let sl = catalog::regular_4x6();
        let books = qpsk_books(&sl);
        let lambdas = [9.0, 4.0, 2.0, 0.5];
        let tx = [1, 2, 3, 0, 1, 2];
        let z = observe(&sl, &books, &tx, &lambdas, 1e-9, 5);
        let out = mp_detect(&DetectorInput { z: &z, lambdas: &lambdas, n0: 1e-9, sl: &sl, books: &books }, 3).unwrap();
        assert_eq!(out.decisions, tx);
        assert!(out.beliefs.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }

    #[test]
    fn invalid_inputs() {
        let sl = catalog::regular_4x6();
        let books = qpsk_books(&sl);
        let z = [Complex64::new(0.0, 0.0); 4];
        let inp = DetectorInput { z: &z, lambdas: &[1.0; 4], n0: 1.0, sl: &sl, books: &books };
        assert!(mp_detect(&inp, 0).is_err());
        let bad = DetectorInput { z: &z[..3], ..inp };
        assert!(ml_detect(&bad).is_err());
    }
}
