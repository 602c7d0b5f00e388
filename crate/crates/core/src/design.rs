//! Codebook design: base constellations, diagonal layer operators, per-channel
//! rotation angles and the weakest-to-strongest scaling search.
//!
//! Layer `l` transmits `Δ_l m_i`, where `m_i` repeats (or permutes) a unit-energy
//! base constellation over the `n_l` eigen-channels of its support and
//! `Δ_l = diag(ρ_j e^{iφ_j})` with `Σ_j ρ_j² = E_s`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::awep::asymptotic_awep;
use crate::eigen::{mean_ordered_eigenvalues, MonomialExpansion};
use crate::error::{Error, Result};
use crate::sl::{check_design_condition, check_design_condition_with, difference_set, Codebook, CodebookSet, SlMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    /// Square QAM.
    Qam,
    /// `sqrt(M)`-PAM on each of the real and imaginary rails (same points as
    /// square QAM; rails are permuted independently).
    PamPerRail,
    Psk,
}

impl std::str::FromStr for BaseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qam" => Ok(Self::Qam),
            "pam-per-rail" | "pam" => Ok(Self::PamPerRail),
            "psk" => Ok(Self::Psk),
            _ => Err(Error::InvalidInput(format!("unknown base constellation '{s}'"))),
        }
    }
}

/// Unit-energy one-dimensional constellation with a per-dimension word-to-point
/// map (identity everywhere for pure repetition).
#[derive(Debug, Clone, PartialEq)]
pub struct BaseConstellation {
    pub kind: BaseKind,
    pub m: usize,
    pub points: Vec<Complex64>,
    /// `permutations[j][i]`: point used by word `i` in dimension `j`.
    pub permutations: Vec<Vec<usize>>,
}

impl BaseConstellation {
    pub fn symbol(&self, word: usize, dim: usize) -> Complex64 {
        self.points[self.permutations[dim][word]]
    }

    /// Smallest squared distance between two points.
    pub fn d2_min(&self) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.m {
            for j in 0..i {
                d = d.min((self.points[i] - self.points[j]).norm_sqr());
            }
        }
        d
    }
}

/// Odd levels then even levels: adjacent indices land at least two apart
/// whenever there are four or more levels.
fn spread_permutation(k: usize) -> Vec<usize> {
    (0..k).filter(|i| i % 2 == 1).chain((0..k).filter(|i| i % 2 == 0)).collect()
}

fn compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&i| p[i]).collect()
}

pub fn build_base(kind: BaseKind, m: usize, permute: bool, n_dims: usize) -> Result<BaseConstellation> {
    if n_dims == 0 {
        return Err(Error::InvalidInput("base constellation needs at least one dimension".into()));
    }
    let (points, rail) = match kind {
        BaseKind::Qam | BaseKind::PamPerRail => {
            let k = (m as f64).sqrt().round() as usize;
            if k < 2 || k * k != m {
                return Err(Error::InvalidInput(format!("{kind:?} needs a square size of at least 4, got {m}")));
            }
            let scale = (1.5 / (m as f64 - 1.0)).sqrt();
            let lvl = |a: usize| (2 * a) as f64 - (k - 1) as f64;
            let pts = (0..m).map(|i| Complex64::new(lvl(i / k), lvl(i % k)) * scale).collect();
            (pts, Some(k))
        }
        BaseKind::Psk => {
            if m < 2 {
                return Err(Error::InvalidInput(format!("PSK needs at least 2 points, got {m}")));
            }
            ((0..m).map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / m as f64)).collect(), None)
        }
    };
    let mut permutations = vec![(0..m).collect::<Vec<usize>>()];
    for j in 1..n_dims {
        let prev = &permutations[j - 1];
        let next = if !permute {
            prev.clone()
        } else if let Some(k) = rail {
            // Real and imaginary rails are permuted independently.
            let p = spread_permutation(k);
            prev.iter().map(|&i| p[i / k] * k + p[i % k]).collect()
        } else {
            compose(&spread_permutation(m), prev)
        };
        permutations.push(next);
    }
    Ok(BaseConstellation { kind, m, points, permutations })
}

/// Diagonal rotate-and-scale operator of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOperator {
    pub layer: usize,
    pub rhos: Vec<f64>,
    pub phis: Vec<f64>,
}

impl LayerOperator {
    pub fn validate(&self, e_s: f64) -> Result<()> {
        let e: f64 = self.rhos.iter().map(|r| r * r).sum();
        if (e - e_s).abs() > 1e-12 * e_s.max(1.0) {
            return Err(Error::InvalidInput(format!("layer {}: Σρ² = {e} differs from E_s = {e_s}", self.layer + 1)));
        }
        if self.rhos.iter().any(|&r| r < 0.0) || self.phis.iter().any(|&p| !(0.0..PI).contains(&p)) {
            return Err(Error::InvalidInput(format!("layer {}: scaling or angle out of range", self.layer + 1)));
        }
        Ok(())
    }

    pub fn codebook(&self, sl: &SlMatrix, base: &BaseConstellation, e_s: f64) -> Result<Codebook> {
        let support = sl.support(self.layer).to_vec();
        if self.rhos.len() != support.len() || self.phis.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: self.rhos.len() });
        }
        if base.permutations.len() < support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: base.permutations.len() });
        }
        let gains: Vec<Complex64> = self.rhos.iter().zip(&self.phis).map(|(&r, &p)| Complex64::from_polar(r, p)).collect();
        let words = (0..base.m).map(|i| gains.iter().enumerate().map(|(j, g)| g * base.symbol(i, j)).collect()).collect();
        Codebook::new(self.layer, support, words, e_s)
    }
}

/// Per-(layer, support position) rotation: the `d_m` layers sharing channel
/// `m` get `k / d_m · 2π/M`, `k = 0..d_m-1`, in ascending layer order.
/// `real` forces every angle to zero.
pub fn rotation_angles(sl: &SlMatrix, m: usize, real: bool) -> Vec<Vec<f64>> {
    let mut phis: Vec<Vec<f64>> = (0..sl.layers()).map(|l| vec![0.0; sl.n_l(l)]).collect();
    if real {
        return phis;
    }
    for ch in 0..sl.n() {
        let d = sl.interferers(ch);
        for (k, &l) in d.iter().enumerate() {
            let j = sl.support(l).iter().position(|&x| x == ch).expect("interferer uses channel");
            phis[l][j] = k as f64 / d.len() as f64 * (2.0 * PI / m as f64);
        }
    }
    phis
}

/// `ρ` on the sphere `Σρ² = E_s` from grid indices of the `n_l - 1` angles,
/// each spanning `[0, π/2]` in `grid_res` points.
pub fn rhos_from_grid(idx: &[usize], grid_res: usize, e_s: f64) -> Vec<f64> {
    let trig = |k: usize| -> (f64, f64) {
        if k == 0 {
            (1.0, 0.0)
        } else if k + 1 == grid_res {
            (0.0, 1.0)
        } else {
            let t = FRAC_PI_2 * k as f64 / (grid_res - 1) as f64;
            (t.cos(), t.sin())
        }
    };
    let mut rhos = Vec::with_capacity(idx.len() + 1);
    let mut tail = e_s.sqrt();
    for &k in idx {
        let (c, s) = trig(k);
        rhos.push(tail * c);
        tail *= s;
    }
    rhos.push(tail);
    rhos
}

pub fn equal_split(n_l: usize, e_s: f64) -> Vec<f64> {
    vec![(e_s / n_l as f64).sqrt(); n_l]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub n_t: usize,
    pub n_r: usize,
    pub base: BaseKind,
    pub m: usize,
    pub permute: bool,
    /// All rotation angles zero.
    pub real: bool,
    pub e_s: f64,
    /// Points per hypersphere angle.
    pub grid_res: usize,
    /// SNR (`L E_s / N_0`, dB) at which asymptotic step objectives are evaluated.
    pub design_snr_db: f64,
    /// Use the weighted-distance criterion for every step, not only the last.
    pub weighted_distance_all_steps: bool,
    /// Largest number of grid points evaluated in one step.
    pub budget: u128,
}

impl DesignOptions {
    pub fn new(n_t: usize, n_r: usize, base: BaseKind, m: usize) -> Self {
        Self {
            n_t,
            n_r,
            base,
            m,
            permute: false,
            real: false,
            e_s: 1.0,
            grid_res: 41,
            design_snr_db: 30.0,
            weighted_distance_all_steps: false,
            budget: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepObjective {
    /// Asymptotic AWEP over `E_{N'}` (minimised).
    Asymptotic,
    /// Minimum weighted distance `Σ λ̄_m |ψ_m|²` over `E_{N'}` (maximised).
    WeightedDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n_prime: usize,
    /// 1-based layers optimised in this step.
    pub layers: Vec<usize>,
    pub objective: StepObjective,
    pub grid_points: u64,
    pub best: f64,
    /// Objective at the equal-power split, for reference.
    pub equal_split: f64,
    pub rhos: Vec<Vec<f64>>,
}

/// Working state: fixed angles, current scalings.
#[derive(Debug, Clone)]
pub struct DesignState {
    pub sl: SlMatrix,
    pub base: BaseConstellation,
    pub e_s: f64,
    pub phis: Vec<Vec<f64>>,
    pub rhos: Vec<Vec<f64>>,
}

impl DesignState {
    /// Equal-power start with the given angles.
    pub fn new(sl: &SlMatrix, base: BaseConstellation, e_s: f64, phis: Vec<Vec<f64>>) -> Self {
        let rhos = (0..sl.layers()).map(|l| equal_split(sl.n_l(l), e_s)).collect();
        Self { sl: sl.clone(), base, e_s, phis, rhos }
    }

    pub fn operators(&self) -> Vec<LayerOperator> {
        (0..self.sl.layers())
            .map(|l| LayerOperator { layer: l, rhos: self.rhos[l].clone(), phis: self.phis[l].clone() })
            .collect()
    }

    pub fn books(&self) -> Result<CodebookSet> {
        let books = self.operators().iter().map(|op| op.codebook(&self.sl, &self.base, self.e_s)).collect::<Result<_>>()?;
        CodebookSet::new(&self.sl, books)
    }

    /// The system restricted to `layers` (ascending), with `overrides`
    /// replacing the scalings of some of them.
    fn subsystem(&self, layers: &[usize], overrides: &[(usize, &[f64])]) -> Result<(SlMatrix, CodebookSet)> {
        let rows = (0..self.sl.n()).map(|m| layers.iter().map(|&l| self.sl.entry(m, l)).collect()).collect();
        let sub = SlMatrix::new(rows)?;
        let books = layers
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let rhos = overrides.iter().find(|(o, _)| *o == l).map_or(self.rhos[l].as_slice(), |(_, r)| r);
                let op = LayerOperator { layer: l, rhos: rhos.to_vec(), phis: self.phis[l].clone() };
                let mut cb = op.codebook(&self.sl, &self.base, self.e_s)?;
                cb.layer = k;
                Ok(cb)
            })
            .collect::<Result<Vec<_>>>()?;
        let set = CodebookSet::new(&sub, books)?;
        Ok((sub, set))
    }
}

/// Grid candidates for the scalings of `layers`: the equal split first, then
/// every combination of hypersphere angles in odometer order.
fn scaling_grid(sl: &SlMatrix, layers: &[usize], grid_res: usize, e_s: f64, budget: u128) -> Result<Vec<Vec<Vec<f64>>>> {
    let dims: Vec<usize> = layers.iter().map(|&l| sl.n_l(l) - 1).collect();
    let total: usize = dims.iter().sum();
    let count = (grid_res as u128).checked_pow(total as u32).and_then(|c| c.checked_add(1)).unwrap_or(u128::MAX);
    if count > budget {
        return Err(Error::BudgetExceeded { needed: count, budget });
    }
    let mut out = vec![layers.iter().map(|&l| equal_split(sl.n_l(l), e_s)).collect()];
    if total == 0 {
        return Ok(out);
    }
    let mut idx = vec![0usize; total];
    loop {
        let mut off = 0;
        let point = dims
            .iter()
            .map(|&d| {
                let r = rhos_from_grid(&idx[off..off + d], grid_res, e_s);
                off += d;
                r
            })
            .collect();
        out.push(point);
        if !crate::sl::increment(&mut idx, grid_res) {
            break;
        }
    }
    Ok(out)
}

/// Largest channel table checked for collisions while searching.
const SEARCH_CHECK_CAP: u128 = 1 << 16;

fn separable(sl: &SlMatrix, books: &CodebookSet) -> bool {
    check_design_condition_with(sl, books, SEARCH_CHECK_CAP, 0, 0).passed
}

/// Result of one scaling step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rhos: Vec<Vec<f64>>,
    pub record: StepRecord,
}

/// Minimises the asymptotic AWEP over `E_{n_prime}` by grid search over the
/// scalings of the layers with exactly `n_prime` leading zeros; layers with
/// more leading zeros keep their current scalings.
pub fn optimize_scaling_step(
    state: &DesignState,
    exp: &MonomialExpansion,
    n_prime: usize,
    grid_res: usize,
    n0: f64,
    budget: u128,
) -> Result<StepOutcome> {
    if n_prime == 0 {
        return Err(Error::InvalidInput("asymptotic steps need N' >= 1".into()));
    }
    let targets = state.sl.layers_with_leading_zeros(n_prime);
    let involved: Vec<usize> = (0..state.sl.layers()).filter(|&l| state.sl.column_leading_zeros(l) >= n_prime).collect();
    let grid = scaling_grid(&state.sl, &targets, grid_res, state.e_s, budget)?;
    let eval = |point: &Vec<Vec<f64>>| -> f64 {
        let overrides: Vec<(usize, &[f64])> = targets.iter().zip(point).map(|(&l, r)| (l, r.as_slice())).collect();
        let value = (|| -> Result<f64> {
            let (sub, books) = state.subsystem(&involved, &overrides)?;
            if !separable(&sub, &books) {
                return Ok(f64::INFINITY);
            }
            let diffs = difference_set(&books, &sub)?;
            asymptotic_awep(&diffs, exp, n0, n_prime)
        })();
        value.ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
    };
    let values: Vec<f64> = grid.par_iter().map(eval).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    if !values[best].is_finite() {
        return Err(Error::Numerical(format!("no feasible scaling for N' = {n_prime}")));
    }
    Ok(StepOutcome {
        rhos: grid[best].clone(),
        record: StepRecord {
            n_prime,
            layers: targets.iter().map(|l| l + 1).collect(),
            objective: StepObjective::Asymptotic,
            grid_points: grid.len() as u64,
            best: values[best],
            equal_split: values[0],
            rhos: grid[best].clone(),
        },
    })
}

/// Relative tolerance for treating two weighted distances as equal.
const TIE_TOL: f64 = 1e-9;

/// Smallest, and optionally second-smallest distinct, value of
/// `Σ_m w_m |ψ_m|²` over all nonzero differences of the superposed alphabet,
/// by depth-first search over per-layer differences with pruning.
pub fn min_weighted_distance(sl: &SlMatrix, books: &CodebookSet, weights: &[f64], second: bool) -> (f64, Option<f64>) {
    let n = sl.n();
    let layers = books.layers();
    let zero = Complex64::new(0.0, 0.0);
    // Distinct nonzero per-layer differences, embedded on the full channel set.
    let diffs: Vec<Vec<Vec<(usize, Complex64)>>> = books
        .books()
        .iter()
        .map(|b| {
            let mut seen = HashMap::new();
            let mut out = Vec::new();
            for i in 0..b.m() {
                for j in 0..b.m() {
                    if i == j {
                        continue;
                    }
                    let d: Vec<(usize, Complex64)> =
                        b.support.iter().zip(b.words[i].iter().zip(&b.words[j])).map(|(&m, (x, y))| (m, x - y)).collect();
                    let key: Vec<(i64, i64)> =
                        d.iter().map(|(_, z)| ((z.re * 1e12).round() as i64, (z.im * 1e12).round() as i64)).collect();
                    if seen.insert(key, ()).is_none() {
                        out.push(d);
                    }
                }
            }
            out
        })
        .collect();
    // Channels whose value is final once layer `l` is assigned.
    let mut finalize: Vec<Vec<usize>> = vec![Vec::new(); layers];
    for m in 0..n {
        if let Some(&last) = sl.interferers(m).last() {
            finalize[last].push(m);
        }
    }

    struct Best {
        first: f64,
        second: f64,
        track: bool,
    }
    impl Best {
        fn record(&mut self, v: f64) {
            if v < self.first * (1.0 - TIE_TOL) {
                if self.track {
                    self.second = self.first;
                }
                self.first = v;
            } else if self.track && v > self.first * (1.0 + TIE_TOL) && v < self.second {
                self.second = v;
            }
        }
        fn prune(&self, partial: f64) -> bool {
            if self.track {
                partial > self.second
            } else {
                partial >= self.first
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        l: usize,
        acc: &mut Vec<Complex64>,
        cost: f64,
        nonzero: bool,
        diffs: &[Vec<Vec<(usize, Complex64)>>],
        finalize: &[Vec<usize>],
        weights: &[f64],
        best: &mut Best,
    ) {
        if l == diffs.len() {
            if nonzero {
                best.record(cost);
            }
            return;
        }
        let close = |acc: &[Complex64]| cost + finalize[l].iter().map(|&m| weights[m] * acc[m].norm_sqr()).sum::<f64>();
        let c = close(acc);
        if !best.prune(c) {
            dfs(l + 1, acc, c, nonzero, diffs, finalize, weights, best);
        }
        for d in &diffs[l] {
            for &(m, z) in d {
                acc[m] += z;
            }
            let c = close(acc);
            if !best.prune(c) {
                dfs(l + 1, acc, c, true, diffs, finalize, weights, best);
            }
            for &(m, z) in d {
                acc[m] -= z;
            }
        }
    }

    let mut best = Best { first: f64::INFINITY, second: f64::INFINITY, track: second };
    // Single-layer differences seed the bound.
    for d in diffs.iter().flatten() {
        best.record(d.iter().map(|&(m, z)| weights[m] * z.norm_sqr()).sum());
    }
    let mut acc = vec![zero; n];
    dfs(0, &mut acc, 0.0, false, &diffs, &finalize, weights, &mut best);
    (best.first, second.then_some(best.second))
}

/// Maximises the minimum weighted distance `Σ_m λ̄_m |ψ_m|²` over the
/// differences generated by `layers` together with every layer already
/// fixed at more leading zeros; ties go to the larger second minimum, then to
/// the earlier grid point.
pub fn maximize_min_weighted_distance(
    state: &DesignState,
    layers: &[usize],
    lambda_bar: &[f64],
    grid_res: usize,
    budget: u128,
) -> Result<StepOutcome> {
    if lambda_bar.len() != state.sl.n() {
        return Err(Error::DimensionMismatch { expected: state.sl.n(), got: lambda_bar.len() });
    }
    let n_prime = layers.iter().map(|&l| state.sl.column_leading_zeros(l)).min().unwrap_or(0);
    let involved: Vec<usize> = (0..state.sl.layers())
        .filter(|&l| layers.contains(&l) || state.sl.column_leading_zeros(l) > n_prime)
        .collect();
    let grid = scaling_grid(&state.sl, layers, grid_res, state.e_s, budget)?;
    let system = |point: &Vec<Vec<f64>>| -> Option<(SlMatrix, CodebookSet)> {
        let overrides: Vec<(usize, &[f64])> = layers.iter().zip(point).map(|(&l, r)| (l, r.as_slice())).collect();
        state.subsystem(&involved, &overrides).ok().filter(|(sub, books)| separable(sub, books))
    };
    let values: Vec<f64> = grid
        .par_iter()
        .map(|p| system(p).map_or(f64::NEG_INFINITY, |(sub, books)| min_weighted_distance(&sub, &books, lambda_bar, false).0))
        .collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(Error::Numerical("no scaling separates the superposed alphabet".into()));
    }
    let tied: Vec<usize> = (0..grid.len()).filter(|&i| values[i] >= top * (1.0 - TIE_TOL)).collect();
    let mut best = tied[0];
    if tied.len() > 1 {
        let seconds: Vec<f64> = tied
            .par_iter()
            .map(|&i| {
                let (sub, books) = system(&grid[i]).expect("feasible point");
                min_weighted_distance(&sub, &books, lambda_bar, true).1.unwrap_or(f64::INFINITY)
            })
            .collect();
        let mut top2 = seconds[0];
        for (k, &s) in seconds.iter().enumerate() {
            if s > top2 * (1.0 + TIE_TOL) {
                top2 = s;
                best = tied[k];
            }
        }
    }
    Ok(StepOutcome {
        rhos: grid[best].clone(),
        record: StepRecord {
            n_prime,
            layers: layers.iter().map(|l| l + 1).collect(),
            objective: StepObjective::WeightedDistance,
            grid_points: grid.len() as u64,
            best: values[best],
            equal_split: values[0],
            rhos: grid[best].clone(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub operators: Vec<LayerOperator>,
    pub books: CodebookSet,
    pub steps: Vec<StepRecord>,
    /// Mean ordered eigenvalues used by the weighted-distance steps.
    pub lambda_bar: Vec<f64>,
}

impl DesignResult {
    /// One JSON object per step.
    pub fn trace_jsonl(&self) -> String {
        self.steps.iter().map(|s| serde_json::to_string(s).expect("step serializes") + "\n").collect()
    }
}

/// Angles first, then scalings from the weakest layers (`N' = N`) down to
/// `N' = 0`; the result must satisfy the per-channel separability condition.
pub fn design_codebooks(sl: &SlMatrix, exp: &MonomialExpansion, opts: &DesignOptions) -> Result<DesignResult> {
    if exp.n != sl.n() || exp.n_t != opts.n_t || exp.n_r != opts.n_r {
        return Err(Error::DimensionMismatch { expected: sl.n(), got: exp.n });
    }
    if opts.grid_res < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    if !(opts.e_s > 0.0) {
        return Err(Error::InvalidInput("E_s must be positive".into()));
    }
    let n_max = (0..sl.layers()).map(|l| sl.n_l(l)).max().unwrap_or(1);
    let base = build_base(opts.base, opts.m, opts.permute, n_max)?;
    let phis = rotation_angles(sl, opts.m, opts.real);
    let mut state = DesignState::new(sl, base, opts.e_s, phis);
    let lambda_bar = mean_ordered_eigenvalues(exp)?;
    let n0 = sl.layers() as f64 * opts.e_s / 10f64.powf(opts.design_snr_db / 10.0);
    let mut steps = Vec::new();
    for n_prime in (0..=sl.big_n()).rev() {
        let layers = sl.layers_with_leading_zeros(n_prime);
        if layers.is_empty() {
            continue;
        }
        let out = if n_prime == 0 || opts.weighted_distance_all_steps {
            maximize_min_weighted_distance(&state, &layers, &lambda_bar, opts.grid_res, opts.budget)?
        } else {
            optimize_scaling_step(&state, exp, n_prime, opts.grid_res, n0, opts.budget)?
        };
        for (&l, r) in layers.iter().zip(&out.rhos) {
            state.rhos[l] = r.clone();
        }
        steps.push(out.record);
    }
    let books = state.books()?;
    let check = check_design_condition(sl, &books);
    if !check.passed {
        let w = check.witness.expect("failed check has a witness");
        return Err(Error::DesignCondition(format!(
            "tuples {:?} and {:?} collide on eigen-channel {}",
            w.first, w.second, w.channel + 1
        )));
    }
    let operators = state.operators();
    for op in &operators {
        op.validate(opts.e_s)?;
    }
    Ok(DesignResult { operators, books, steps, lambda_bar })
}

/// Equal-power layers with the per-channel rotations only (no scaling search).
pub fn rotated_baseline(sl: &SlMatrix, kind: BaseKind, m: usize, e_s: f64, real: bool) -> Result<CodebookSet> {
    let n_max = (0..sl.layers()).map(|l| sl.n_l(l)).max().unwrap_or(1);
    let base = build_base(kind, m, false, n_max)?;
    DesignState::new(sl, base, e_s, rotation_angles(sl, m, real)).books()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::expand_ordered_pdf;
    use crate::sl::catalog;

    #[test]
    fn qpsk_base() {
        let b = build_base(BaseKind::Qam, 4, false, 2).unwrap();
        let h = 0.5f64.sqrt();
        for p in &b.points {
            assert!((p.re.abs() - h).abs() < 1e-15 && (p.im.abs() - h).abs() < 1e-15);
        }
        assert_eq!(b.permutations[0], b.permutations[1]);
    }

    #[test]
    fn unit_energy_bases() {
        for (kind, m) in [(BaseKind::Qam, 16), (BaseKind::PamPerRail, 64), (BaseKind::Psk, 8), (BaseKind::Qam, 256)] {
            let b = build_base(kind, m, true, 3).unwrap();
            let e = b.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 1.0).abs() < 1e-12);
            for p in &b.permutations {
                let mut s = p.clone();
                s.sort_unstable();
                assert_eq!(s, (0..m).collect::<Vec<_>>());
            }
        }
        assert!(build_base(BaseKind::Qam, 8, false, 1).is_err());
    }

    #[test]
    fn rotation_angles_per_channel() {
        let sl = catalog::regular_4x6();
        let phis = rotation_angles(&sl, 4, false);
        // Channel 1 is shared by layers 1, 2, 3 in that order.
        assert_eq!(phis[0][0], 0.0);
        assert!((phis[1][0] - PI / 6.0).abs() < 1e-15);
        assert!((phis[2][0] - PI / 3.0).abs() < 1e-15);
        let x = rotation_angles(&catalog::x_shaped_4(), 4, false);
        assert!((x[3][0] - PI / 4.0).abs() < 1e-15);
        assert!(rotation_angles(&sl, 4, true).iter().flatten().all(|&p| p == 0.0));
    }

    #[test]
    fn hypersphere_grid_keeps_energy() {
        for idx in [[0usize, 0], [40, 40], [13, 27]] {
            let r = rhos_from_grid(&idx, 41, 2.0);
            assert!((r.iter().map(|x| x * x).sum::<f64>() - 2.0).abs() < 1e-12);
            assert!(r.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(rhos_from_grid(&[40], 41, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn grid_budget_is_enforced() {
        let sl = catalog::regular_4x6();
        let err = scaling_grid(&sl, &[0, 1, 2], 41, 1.0, 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { needed: 68922, budget: 1000 }));
    }

    #[test]
    fn single_dimension_layer_is_forced() {
        let sl = catalog::identity(1);
        let base = build_base(BaseKind::Qam, 4, false, 1).unwrap();
        let d2 = base.d2_min();
        let state = DesignState::new(&sl, base, 1.0, vec![vec![0.0]]);
        let out = maximize_min_weighted_distance(&state, &[0], &[3.0], 41, 10).unwrap();
        assert_eq!(out.record.grid_points, 1);
        assert!((out.record.best - 3.0 * d2).abs() < 1e-12);
    }

    #[test]
    fn weighted_distance_search_matches_brute_force() {
        let sl = catalog::overlapped_4x4();
        let books = rotated_baseline(&sl, BaseKind::Qam, 4, 1.0, false).unwrap();
        let w = [3.0, 1.5, 0.6, 0.1];
        let (got, second) = min_weighted_distance(&sl, &books, &w, true);
        let m = books.m();
        let mut words = Vec::new();
        let mut t = vec![0; 4];
        loop {
            words.push(crate::sl::superpose(&sl, &t, &books).unwrap());
            if !crate::sl::increment(&mut t, m) {
                break;
            }
        }
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..words.len() {
            for j in 0..i {
                vals.push(words[i].iter().zip(&words[j]).zip(&w).map(|((a, b), w)| w * (a - b).norm_sqr()).sum());
            }
        }
        vals.sort_by(f64::total_cmp);
        assert!((got - vals[0]).abs() < 1e-12 * vals[0]);
        let next = vals.iter().find(|&&v| v > vals[0] * (1.0 + TIE_TOL)).unwrap();
        assert!((second.unwrap() - next).abs() < 1e-12 * next);
    }

    #[test]
    fn equal_power_rotations_collide_on_triple_channels() {
        // Three equal-power QPSK layers rotated by 0, π/6, π/3 share sums on
        // channel 1, although the superposed words stay distinct.
        for sl in [catalog::regular_4x6(), catalog::overlapped_4x4()] {
            let books = rotated_baseline(&sl, BaseKind::Qam, 4, 1.0, false).unwrap();
            let check = check_design_condition(&sl, &books);
            assert_eq!(check.witness.unwrap().channel, 0);
            assert!(difference_set(&books, &sl).is_ok());
        }
        let sl = catalog::x_shaped_4();
        assert!(check_design_condition(&sl, &rotated_baseline(&sl, BaseKind::Qam, 4, 1.0, false).unwrap()).passed);
    }

    #[test]
    fn design_small_system() {
        let sl = catalog::overlapped_4x4();
        let exp = expand_ordered_pdf(4, 4).unwrap();
        let mut opts = DesignOptions::new(4, 4, BaseKind::Qam, 4);
        opts.grid_res = 9;
        let res = design_codebooks(&sl, &exp, &opts).unwrap();
        assert_eq!(res.steps.len(), 2);
        assert_eq!(res.steps[0].layers, vec![4]);
        assert_eq!(res.steps[1].layers, vec![1, 2, 3]);
        assert!(res.steps[0].best <= res.steps[0].equal_split);
        assert!(res.steps[1].best >= res.steps[1].equal_split);
        for op in &res.operators {
            op.validate(1.0).unwrap();
        }
    }
}
