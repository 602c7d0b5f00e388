//! Monte Carlo word-error simulation, detector convergence studies and
//! SNR-gap comparison of AWEP curves.
//!
//! Every word draws its channel, data and noise from its own stream keyed by
//! `(seed, point, word)`. Words are processed in fixed-size chunks and early
//! stopping is only decided at chunk boundaries, so results are identical for
//! any thread count.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::awep::{AwepReport, McEstimate};
use crate::channel::{sample_spectrum, MimoConfig};
use crate::detect::{argmax, MpOptions, MpWorkspace, SystemModel};
use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, stream, Stream};
use crate::sl::{superpose_into, CodebookSet, SlMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorKind {
    Ml,
    Mp {
        iterations: usize,
        #[serde(default)]
        damping: f64,
    },
    /// Per-layer argmax of the exact marginals.
    Exact,
}

impl DetectorKind {
    pub fn label(&self) -> String {
        match self {
            Self::Ml => "ml".into(),
            Self::Mp { iterations, .. } => format!("mp{iterations}"),
            Self::Exact => "exact".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stopping {
    /// Stop a point once this many word errors are seen (and `min_words` run).
    pub min_errors: u64,
    pub min_words: u64,
    pub max_words: u64,
}

impl Default for Stopping {
    fn default() -> Self {
        Self { min_errors: 200, min_words: 0, max_words: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub snr_db: Vec<f64>,
    pub detector: DetectorKind,
    pub stopping: Stopping,
    pub seed: u64,
    /// Words per chunk; stopping is checked between chunks.
    pub chunk: u64,
    pub e_s: f64,
    /// Suppress the noise (detection still uses the nominal `N_0`).
    #[serde(default)]
    pub noiseless: bool,
}

impl SimConfig {
    pub fn new(n_t: usize, n_r: usize, snr_db: Vec<f64>, detector: DetectorKind, seed: u64) -> Self {
        Self { n_t, n_r, snr_db, detector, stopping: Stopping::default(), seed, chunk: 4096, e_s: 1.0, noiseless: false }
    }

    pub fn validate(&self, sl: &SlMatrix) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::InvalidInput("SNR grid is empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("SNR values must be finite".into()));
        }
        if self.n_t.min(self.n_r) != sl.n() {
            return Err(Error::DimensionMismatch { expected: self.n_t.min(self.n_r), got: sl.n() });
        }
        if self.stopping.min_errors == 0 || self.stopping.max_words == 0 || self.chunk == 0 {
            return Err(Error::InvalidInput("stopping limits and chunk size must be positive".into()));
        }
        if let DetectorKind::Mp { iterations, damping } = self.detector {
            if iterations == 0 || !(0.0..1.0).contains(&damping) {
                return Err(Error::InvalidInput("MP needs at least one iteration and damping in [0, 1)".into()));
            }
        }
        if !(self.e_s > 0.0) {
            return Err(Error::InvalidInput("E_s must be positive".into()));
        }
        Ok(())
    }

    /// `N_0` giving `L E_s / N_0` equal to `snr_db`.
    pub fn n0(&self, layers: usize, snr_db: f64) -> f64 {
        layers as f64 * self.e_s / 10f64.powf(snr_db / 10.0)
    }
}

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `errors` out of `words`.
pub fn wilson_interval(errors: u64, words: u64) -> (f64, f64) {
    if words == 0 {
        return (0.0, 1.0);
    }
    let n = words as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == words { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub words: u64,
    pub errors: u64,
    pub awep: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CurvePoint {
    pub fn new(snr_db: f64, words: u64, errors: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(errors, words);
        let awep = if words == 0 { 0.0 } else { errors as f64 / words as f64 };
        Self { snr_db, words, errors, awep, ci_lo, ci_hi }
    }

    /// Binomial standard error of the estimate.
    pub fn std_error(&self) -> f64 {
        if self.words == 0 {
            return 0.0;
        }
        (self.awep * (1.0 - self.awep) / self.words as f64).sqrt()
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate { awep: self.awep, ci_lo: self.ci_lo, ci_hi: self.ci_hi, words: self.words, errors: self.errors }
    }
}

/// A layering matrix with its codebooks and detector tables.
#[derive(Debug, Clone)]
pub struct System {
    pub sl: SlMatrix,
    pub books: CodebookSet,
    model: SystemModel,
}

impl System {
    pub fn new(sl: SlMatrix, books: CodebookSet) -> Result<Self> {
        let model = SystemModel::new(&sl, &books)?;
        Ok(Self { sl, books, model })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }
}

/// Channel, data and observation of one simulated word.
struct Word {
    lambdas: Vec<f64>,
    tx: Vec<usize>,
    z: Vec<Complex64>,
}

fn draw_word(sys: &System, mimo: &MimoConfig, noise: bool, rng: &mut Stream) -> Result<Word> {
    let lambdas = sample_spectrum(mimo, rng)?;
    let m = sys.books.m();
    let tx: Vec<usize> = (0..sys.books.layers()).map(|_| rng.random_range(0..m)).collect();
    let mut s = vec![Complex64::new(0.0, 0.0); sys.sl.n()];
    superpose_into(&sys.books, &tx, &mut s);
    let z = s
        .iter()
        .zip(&lambdas)
        .map(|(x, l)| {
            let w = complex_gaussian(rng, mimo.n0);
            x * l.sqrt() + if noise { w } else { Complex64::new(0.0, 0.0) }
        })
        .collect();
    Ok(Word { lambdas, tx, z })
}

fn detect(sys: &System, kind: &DetectorKind, w: &Word, n0: f64, ws: &mut MpWorkspace) -> Result<Vec<usize>> {
    let model = sys.model();
    match *kind {
        DetectorKind::Ml => model.ml(&w.z, &w.lambdas, n0),
        DetectorKind::Mp { iterations, damping } => {
            Ok(model.mp(&w.z, &w.lambdas, n0, &MpOptions { iterations, damping }, ws)?.decisions)
        }
        DetectorKind::Exact => Ok(model.marginals(&w.z, &w.lambdas, n0)?.iter().map(|p| argmax(p)).collect()),
    }
}

/// Runs chunks of words until `done(words, counts)`; `per_word` returns one
/// error flag per tracked detector.
fn run_chunks(
    cfg: &SimConfig,
    tracks: usize,
    per_word: impl Fn(u64, &mut MpWorkspace) -> Result<Vec<bool>> + Sync,
) -> Result<(u64, Vec<u64>)> {
    let st = &cfg.stopping;
    let mut words = 0u64;
    let mut counts = vec![0u64; tracks];
    while words < st.max_words {
        let end = (words + cfg.chunk).min(st.max_words);
        let chunk: Vec<u64> = (words..end)
            .into_par_iter()
            .map_init(MpWorkspace::default, |ws, w| per_word(w, ws))
            .try_fold(
                || vec![0u64; tracks],
                |mut acc, flags| {
                    for (a, f) in acc.iter_mut().zip(flags?) {
                        *a += u64::from(f);
                    }
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; tracks],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )?;
        counts.iter_mut().zip(chunk).for_each(|(c, x)| *c += x);
        words = end;
        if words >= st.min_words && counts.iter().all(|&c| c >= st.min_errors) {
            break;
        }
    }
    Ok((words, counts))
}

/// Simulated AWEP at every SNR of the grid (fresh channel per word; a word
/// error is any layer decided wrongly).
pub fn run_curve(sys: &System, cfg: &SimConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate(&sys.sl)?;
    let layers = sys.books.layers();
    cfg.snr_db
        .iter()
        .enumerate()
        .map(|(p, &snr)| {
            let n0 = cfg.n0(layers, snr);
            let mimo = MimoConfig { n_t: cfg.n_t, n_r: cfg.n_r, n0, snr_db: snr };
            let (words, counts) = run_chunks(cfg, 1, |w, ws| {
                let mut rng = stream(cfg.seed, &[p as u64, w]);
                let word = draw_word(sys, &mimo, !cfg.noiseless, &mut rng)?;
                Ok(vec![detect(sys, &cfg.detector, &word, n0, ws)? != word.tx])
            })?;
            Ok(CurvePoint::new(snr, words, counts[0]))
        })
        .collect()
}

/// Copies simulated points into an analytic report on the same grid.
pub fn merge_into_report(report: &mut AwepReport, points: &[CurvePoint]) -> Result<()> {
    if report.snr_db.len() != points.len()
        || report.snr_db.iter().zip(points).any(|(a, p)| (a - p.snr_db).abs() > 1e-12)
    {
        return Err(Error::InvalidInput("simulated and analytic SNR grids differ".into()));
    }
    report.mc = points.iter().map(|p| Some(p.estimate())).collect();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// `"ml"` or the MP iteration count.
    pub detector: String,
    pub iterations: Option<usize>,
    pub point: CurvePoint,
}

/// MP word-error rate after each iteration count in `iters`, with the ML
/// reference, all on the same channel and noise draws.
pub fn convergence_study(sys: &System, cfg: &SimConfig, snr_db: f64, iters: &[usize]) -> Result<Vec<ConvergenceRow>> {
    cfg.validate(&sys.sl)?;
    let max_it = iters.iter().copied().max().ok_or(Error::InvalidInput("iteration list is empty".into()))?;
    if iters.contains(&0) {
        return Err(Error::InvalidInput("iteration counts must be at least 1".into()));
    }
    let damping = match cfg.detector {
        DetectorKind::Mp { damping, .. } => damping,
        _ => 0.0,
    };
    let n0 = cfg.n0(sys.books.layers(), snr_db);
    let mimo = MimoConfig { n_t: cfg.n_t, n_r: cfg.n_r, n0, snr_db };
    let opts = MpOptions { iterations: max_it, damping };
    let (words, counts) = run_chunks(cfg, iters.len() + 1, |w, ws| {
        let mut rng = stream(cfg.seed, &[u64::MAX, w]);
        let word = draw_word(sys, &mimo, !cfg.noiseless, &mut rng)?;
        let mut flags = vec![false; iters.len() + 1];
        sys.model().mp_run(&word.z, &word.lambdas, n0, &opts, ws, |t, dec, _| {
            for (f, &it) in flags.iter_mut().zip(iters) {
                if it == t {
                    *f = dec != word.tx.as_slice();
                }
            }
        })?;
        flags[iters.len()] = sys.model().ml(&word.z, &word.lambdas, n0)? != word.tx;
        Ok(flags)
    })?;
    let mut rows: Vec<ConvergenceRow> = iters
        .iter()
        .zip(&counts)
        .map(|(&it, &c)| ConvergenceRow { detector: format!("mp{it}"), iterations: Some(it), point: CurvePoint::new(snr_db, words, c) })
        .collect();
    rows.push(ConvergenceRow { detector: "ml".into(), iterations: None, point: CurvePoint::new(snr_db, words, counts[iters.len()]) });
    Ok(rows)
}

/// Where a curve crosses a target level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "snr_db", rename_all = "kebab-case")]
pub enum Crossing {
    At(f64),
    /// Still above the target at this (last) grid SNR.
    NotReached(f64),
    /// Already below the target at this (first) grid SNR.
    AlreadyBelow(f64),
}

/// Crossing SNR by linear interpolation in `(snr_db, log10 awep)`; points
/// with zero AWEP are ignored.
pub fn crossing(snr_db: &[f64], awep: &[f64], target: f64) -> Result<Crossing> {
    let pts: Vec<(f64, f64)> = snr_db.iter().zip(awep).filter(|(_, &v)| v > 0.0).map(|(&s, &v)| (s, v.log10())).collect();
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(Error::InvalidInput("curve has no positive values".into())),
    };
    let t = target.log10();
    if pts[0].1 <= t {
        return Ok(Crossing::AlreadyBelow(first));
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y1 <= t {
            return Ok(Crossing::At(x0 + (t - y0) / (y1 - y0) * (x1 - x0)));
        }
    }
    Ok(Crossing::NotReached(last))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapKind {
    Exact,
    /// The true gap is at least the reported value.
    LowerBound,
    /// The true gap is at most the reported value.
    UpperBound,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub system: String,
    pub target: f64,
    /// `SNR_system - SNR_reference` at the target AWEP (positive: the
    /// reference needs less power).
    pub gap_db: Option<f64>,
    pub kind: GapKind,
}

/// Horizontal gaps of every curve against the first one at each target AWEP.
pub fn compare_systems(curves: &[(String, Vec<f64>, Vec<f64>)], targets: &[f64]) -> Result<Vec<Gap>> {
    if curves.len() < 2 {
        return Err(Error::InvalidInput("comparison needs at least two curves".into()));
    }
    let grid = &curves[0].1;
    if curves.iter().any(|(_, s, v)| s != grid || v.len() != s.len()) {
        return Err(Error::InvalidInput("curves must share one SNR grid".into()));
    }
    let mut out = Vec::new();
    for &target in targets {
        let reference = crossing(&curves[0].1, &curves[0].2, target)?;
        for (name, s, v) in &curves[1..] {
            let other = crossing(s, v, target)?;
            let (gap_db, kind) = match (reference, other) {
                (Crossing::At(r), Crossing::At(o)) => (Some(o - r), GapKind::Exact),
                (Crossing::At(r) | Crossing::AlreadyBelow(r), Crossing::NotReached(o)) => (Some(o - r), GapKind::LowerBound),
                (Crossing::NotReached(r), Crossing::At(o) | Crossing::AlreadyBelow(o)) => (Some(o - r), GapKind::UpperBound),
                (Crossing::AlreadyBelow(r), Crossing::At(o)) => (Some(o - r), GapKind::LowerBound),
                (Crossing::At(r), Crossing::AlreadyBelow(o)) => (Some(o - r), GapKind::UpperBound),
                _ => (None, GapKind::Unavailable),
            };
            out.push(Gap { system: name.clone(), target, gap_db, kind });
        }
    }
    Ok(out)
}
