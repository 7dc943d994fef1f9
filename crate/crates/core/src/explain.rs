//! Feature-level explanations of linear and black-box scorers.
//!
//! Coalition values are computed by background substitution: for a
//! coalition `S`, features in `S` take their value from the explained
//! vector and every other feature takes its background value. Only
//! features whose explained and background values differ take part in a
//! game; all others receive zero attribution.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Vocabulary;
use crate::sparse::SparseVector;
use crate::svm::LinearSvmModel;

/// Exhaustive enumeration limit for [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error(
        "{0} active features exceed the exact enumeration limit of {MAX_EXACT_FEATURES}; use kernel mode"
    )]
    TooManyFeatures(usize),
    #[error("kernel mode needs at least {needed} samples for {features} active features, got {got}")]
    TooFewSamples { needed: usize, features: usize, got: usize },
    #[error("kernel regression system is singular; increase n_samples")]
    SingularSystem,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no attributions to aggregate")]
    Empty,
}

/// A real-valued model over sparse feature vectors.
pub trait Scorer: Sync {
    fn score(&self, x: &SparseVector) -> f64;
}

impl<F> Scorer for F
where
    F: Fn(&SparseVector) -> f64 + Sync,
{
    fn score(&self, x: &SparseVector) -> f64 {
        self(x)
    }
}

impl Scorer for LinearSvmModel {
    /// Decision value; panics when `x` has the wrong dimensionality.
    fn score(&self, x: &SparseVector) -> f64 {
        self.decision_value(x).expect("scored vector matches model dimensionality")
    }
}

/// Per-feature contributions for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub doc_id: String,
    /// Model output with every feature at its background value.
    pub base_value: f64,
    pub model_output: f64,
    /// Feature index → attribution; features absent from the map have zero.
    pub values: BTreeMap<usize, f64>,
}

impl Attribution {
    pub fn with_doc_id(mut self, id: impl Into<String>) -> Self {
        self.doc_id = id.into();
        self
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.values.get(&feature).copied().unwrap_or(0.0)
    }

    /// `base + Σφ − f(x)`; zero for an efficient attribution.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.values.values().sum::<f64>() - self.model_output
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    #[default]
    ZeroVector,
    FeatureMeans,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Kernel,
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    pub n_samples: usize,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ShapMode,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            n_samples: 2048,
            background: Background::ZeroVector,
            seed: 0,
            mode: ShapMode::Linear,
        }
    }
}

/// Coalition game induced by an explained vector and a background.
struct Game<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    dims: usize,
    /// Union support of x and background: (index, x value, background value).
    support: Vec<(usize, f64, f64)>,
    /// Positions in `support` of the players (entries where x ≠ background).
    players: Vec<usize>,
}

impl<'a, S: Scorer + ?Sized> Game<'a, S> {
    fn new(scorer: &'a S, x: &SparseVector, background: &SparseVector) -> Result<Self, ExplainError> {
        if x.dims() != background.dims() {
            return Err(ExplainError::DimensionMismatch {
                expected: x.dims(),
                found: background.dims(),
            });
        }
        let mut idx: Vec<usize> = x.indices().iter().chain(background.indices()).copied().collect();
        idx.sort_unstable();
        idx.dedup();
        let support: Vec<(usize, f64, f64)> = idx.into_iter().map(|i| (i, x.get(i), background.get(i))).collect();
        let players = (0..support.len()).filter(|&p| support[p].1 != support[p].2).collect();
        Ok(Self {
            scorer,
            dims: x.dims(),
            support,
            players,
        })
    }

    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn feature(&self, player: usize) -> usize {
        self.support[self.players[player]].0
    }

    /// Scorer value with `coalition[p]` selecting the explained value of player `p`.
    fn value(&self, coalition: impl Fn(usize) -> bool) -> f64 {
        let mut from_x = vec![false; self.support.len()];
        for (p, &pos) in self.players.iter().enumerate() {
            from_x[pos] = coalition(p);
        }
        let (indices, values) = self
            .support
            .iter()
            .zip(&from_x)
            .map(|(&(i, xv, bv), &take)| (i, if take { xv } else { bv }))
            .unzip();
        let v = SparseVector::new(self.dims, indices, values).expect("support is sorted");
        self.scorer.score(&v)
    }

    fn attribution(&self, base_value: f64, model_output: f64, phi: &[f64]) -> Attribution {
        Attribution {
            doc_id: String::new(),
            base_value,
            model_output,
            values: phi
                .iter()
                .enumerate()
                .map(|(p, &v)| (self.feature(p), v))
                .collect(),
        }
    }
}

/// Exact Shapley values by enumerating all `2^M` coalitions of the `M`
/// features where `x` and `background` differ.
pub fn exact_shapley<S: Scorer + ?Sized>(
    scorer: &S,
    x: &SparseVector,
    background: &SparseVector,
) -> Result<Attribution, ExplainError> {
    let game = Game::new(scorer, x, background)?;
    let m = game.n_players();
    if m > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures(m));
    }
    let n_coalitions = 1usize << m;
    let values: Vec<f64> = (0..n_coalitions)
        .map(|mask| game.value(|p| mask >> p & 1 == 1))
        .collect();

    // |S|!(M−|S|−1)!/M! = 1 / (M · C(M−1, |S|))
    let weight: Vec<f64> = (0..m.max(1))
        .map(|s| 1.0 / (m as f64 * binomial(m.saturating_sub(1), s)))
        .collect();
    let mut phi = vec![0.0; m];
    for (p, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << p;
        let mut acc = 0.0;
        for mask in (0..n_coalitions).filter(|mask| mask & bit == 0) {
            let size = mask.count_ones() as usize;
            acc += weight[size] * (values[mask | bit] - values[mask]);
        }
        *slot = acc;
    }
    Ok(game.attribution(values[0], values[n_coalitions - 1], &phi))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight `(M−1) / (C(M,s)·s·(M−s))` of one coalition of
/// size `s`; infinite for the empty and full coalitions.
pub fn shapley_kernel_weight(m: usize, s: usize) -> f64 {
    if s == 0 || s >= m {
        return f64::INFINITY;
    }
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

/// Total kernel mass of all coalitions of size `s`: `(M−1)/(s(M−s))`.
fn shell_mass(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (s as f64 * (m - s) as f64)
}

fn for_each_subset(m: usize, s: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        let mut i = s;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < m - s + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Kernel SHAP: weighted least squares over sampled coalitions with the
/// Shapley kernel, constrained so the attributions sum to `f(x) − base`.
///
/// The budget of `cfg.n_samples` coalitions always includes the empty and
/// full coalitions. Remaining budget enumerates complete subset-size shells
/// from the extremes inward (sizes `s` and `M−s` together) while a shell's
/// share of the kernel mass affords all of its members; leftover sizes are
/// sampled by kernel mass with paired complements. With
/// `n_samples ≥ 2^M` every coalition is enumerated and the result equals
/// the exact Shapley values.
pub fn kernel_shap<S: Scorer + ?Sized>(
    scorer: &S,
    x: &SparseVector,
    background: &SparseVector,
    cfg: &ShapConfig,
) -> Result<Attribution, ExplainError> {
    let game = Game::new(scorer, x, background)?;
    let m = game.n_players();
    let base = game.value(|_| false);
    let full = game.value(|_| true);
    let delta = full - base;
    if m == 0 {
        return Ok(game.attribution(base, full, &[]));
    }
    let needed = 2 * m + 4;
    if cfg.n_samples < needed {
        return Err(ExplainError::TooFewSamples {
            needed,
            features: m,
            got: cfg.n_samples,
        });
    }
    if m == 1 {
        return Ok(game.attribution(base, full, &[delta]));
    }

    let coalitions = sample_coalitions(m, cfg.n_samples - 2, cfg.seed);
    let rows: Vec<(Vec<bool>, f64, f64)> = coalitions
        .into_iter()
        .map(|(z, w)| {
            let v = game.value(|p| z[p]);
            (z, w, v)
        })
        .collect();

    // eliminate the last player through Σφ = Δ
    let free = m - 1;
    let mut ata = DMatrix::<f64>::zeros(free, free);
    let mut aty = DVector::<f64>::zeros(free);
    let mut a = vec![0.0; free];
    for (z, w, v) in &rows {
        let last = z[m - 1] as u8 as f64;
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = z[i] as u8 as f64 - last;
        }
        let target = v - base - last * delta;
        for i in 0..free {
            if a[i] == 0.0 {
                continue;
            }
            aty[i] += w * a[i] * target;
            for j in 0..free {
                ata[(i, j)] += w * a[i] * a[j];
            }
        }
    }
    let phi_free = solve_spd(ata, aty).ok_or(ExplainError::SingularSystem)?;
    let mut phi: Vec<f64> = phi_free.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(game.attribution(base, full, &phi))
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.diagonal().amax();
    if scale == 0.0 {
        return None;
    }
    let lu = a.lu();
    let u = lu.u();
    let smallest = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if smallest <= 1e-12 * scale {
        return None;
    }
    lu.solve(&b)
}

/// Chooses weighted coalitions (excluding empty and full) for `m` players
/// within `budget` scorer evaluations. Weights sum to the total kernel mass
/// of sizes `1..m−1`.
fn sample_coalitions(m: usize, budget: usize, seed: u64) -> Vec<(Vec<bool>, f64)> {
    let mut out: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut remaining_budget = budget as f64;
    let mut remaining_mass: f64 = (1..m).map(|s| shell_mass(m, s)).sum();
    let mut remaining_subsets: f64 = 2f64.powi(m as i32) - 2.0;
    let n_shells = m / 2;
    let mut next_shell = 1;

    while next_shell <= n_shells {
        let s = next_shell;
        let paired = s != m - s;
        let mult = if paired { 2.0 } else { 1.0 };
        let n_subsets = binomial(m, s) * mult;
        let mass = shell_mass(m, s) * mult;
        let affordable = remaining_budget >= remaining_subsets
            || remaining_budget * mass / remaining_mass >= n_subsets - 1e-8;
        if !affordable || n_subsets > remaining_budget {
            break;
        }
        let w = shapley_kernel_weight(m, s);
        for_each_subset(m, s, |members| {
            let mut z = vec![false; m];
            for &p in members {
                z[p] = true;
            }
            if paired {
                out.push((z.iter().map(|b| !b).collect(), w));
            }
            out.push((z, w));
        });
        remaining_budget -= n_subsets;
        remaining_mass -= mass;
        remaining_subsets -= n_subsets;
        next_shell += 1;
    }

    let draws = remaining_budget as usize;
    if next_shell > n_shells || draws == 0 {
        return out;
    }

    // sizes not enumerated: next_shell ..= m − next_shell
    let sizes: Vec<usize> = (next_shell..=m - next_shell).collect();
    let masses: Vec<f64> = sizes.iter().map(|&s| shell_mass(m, s)).collect();
    let total: f64 = masses.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    let mut drawn = 0;
    while drawn < draws {
        let mut u = rng.gen::<f64>() * total;
        let mut s = *sizes.last().expect("non-empty");
        for (&size, &mass) in sizes.iter().zip(&masses) {
            if u < mass {
                s = size;
                break;
            }
            u -= mass;
        }
        let members = rand::seq::index::sample(&mut rng, m, s);
        let mut z = vec![false; m];
        for p in members.iter() {
            z[p] = true;
        }
        let complement: Vec<bool> = z.iter().map(|b| !b).collect();
        *sampled.entry(z).or_insert(0) += 1;
        drawn += 1;
        if drawn < draws {
            *sampled.entry(complement).or_insert(0) += 1;
            drawn += 1;
        }
    }
    let per_draw = remaining_mass / draws as f64;
    out.extend(sampled.into_iter().map(|(z, n)| (z, n as f64 * per_draw)));
    out
}

/// Closed-form Shapley values of a linear model under feature
/// independence: `φᵢ = wᵢ(xᵢ − meanᵢ)`, base `w·mean + b`.
pub fn linear_shap(
    model: &LinearSvmModel,
    feature_means: &[f64],
    x: &SparseVector,
) -> Result<Attribution, ExplainError> {
    let d = model.dims();
    for found in [feature_means.len(), x.dims()] {
        if found != d {
            return Err(ExplainError::DimensionMismatch { expected: d, found });
        }
    }
    let base_value = model.bias + model.weights.iter().zip(feature_means).map(|(w, m)| w * m).sum::<f64>();
    let mut values = BTreeMap::new();
    if feature_means.iter().all(|&m| m == 0.0) {
        for (i, v) in x.iter() {
            let phi = model.weights[i] * v;
            if phi != 0.0 {
                values.insert(i, phi);
            }
        }
    } else {
        for (i, (&w, &mean)) in model.weights.iter().zip(feature_means).enumerate() {
            let phi = w * (x.get(i) - mean);
            if phi != 0.0 {
                values.insert(i, phi);
            }
        }
    }
    let model_output = x.dot_dense(&model.weights) + model.bias;
    Ok(Attribution {
        doc_id: String::new(),
        base_value,
        model_output,
        values,
    })
}

/// Column means over a set of vectors.
pub fn feature_means(vectors: &[SparseVector], dims: usize) -> Vec<f64> {
    let mut sums = vec![0.0; dims];
    for v in vectors {
        v.axpy_into(1.0, &mut sums);
    }
    if !vectors.is_empty() {
        let n = vectors.len() as f64;
        sums.iter_mut().for_each(|s| *s /= n);
    }
    sums
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub value: f64,
}

/// Hyperplane-weight importance: the most negative weights push toward
/// `Left`, the most positive toward `Right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub k: usize,
    /// Most negative weight first.
    pub left_terms: Vec<RankedTerm>,
    /// Most positive weight first.
    pub right_terms: Vec<RankedTerm>,
    /// Set when the requested k exceeded the vocabulary size.
    pub truncated: bool,
}

/// Ranks vocabulary terms by SVM weight. The bias is not a vocabulary
/// column and never appears. Ties are broken by term.
pub fn svm_feature_importance(
    model: &LinearSvmModel,
    vocab: &Vocabulary,
    k: usize,
) -> Result<ImportanceReport, ExplainError> {
    if model.dims() != vocab.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: vocab.len(),
            found: model.dims(),
        });
    }
    let truncated = k > vocab.len();
    if truncated {
        log::warn!("requested top {k} terms but the vocabulary has only {}", vocab.len());
    }
    let k = k.min(vocab.len());
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| {
        model.weights[a]
            .total_cmp(&model.weights[b])
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    let ranked = |i: &usize| RankedTerm {
        term: vocab.term(*i).to_string(),
        value: model.weights[*i],
    };
    let left_terms = order.iter().take(k).map(ranked).collect();
    order.sort_by(|&a, &b| {
        model.weights[b]
            .total_cmp(&model.weights[a])
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    let right_terms = order.iter().take(k).map(ranked).collect();
    Ok(ImportanceReport {
        k,
        left_terms,
        right_terms,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    MaxMin,
    TotalSum,
}

pub const TOTAL_SUM_WARNING: &str =
    "total-sum aggregation favours frequent tokens such as stopwords; prefer max_min";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mode: AggregationMode,
    pub n_documents: usize,
    /// Most negative extreme (or sum) first.
    pub left_tokens: Vec<RankedTerm>,
    /// Most positive extreme (or sum) first.
    pub right_tokens: Vec<RankedTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl AggregateReport {
    /// Copy keeping only the first `k` entries per side.
    pub fn top(&self, k: usize) -> Self {
        Self {
            left_tokens: self.left_tokens.iter().take(k).cloned().collect(),
            right_tokens: self.right_tokens.iter().take(k).cloned().collect(),
            ..self.clone()
        }
    }
}

/// Corpus-level ranking of tokens from per-document attributions.
///
/// `MaxMin` keeps, per token, the minimum and maximum attribution recorded
/// in any document; tokens with a negative minimum enter the left list and
/// tokens with a positive maximum the right list, so one token can appear
/// on both sides. `TotalSum` ranks by the signed sum. `names` maps feature
/// indices to token strings.
pub fn aggregate_attributions(
    attributions: &[Attribution],
    mode: AggregationMode,
    names: &[String],
) -> Result<AggregateReport, ExplainError> {
    if attributions.is_empty() {
        return Err(ExplainError::Empty);
    }
    let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));

    let (mut left, mut right): (Vec<RankedTerm>, Vec<RankedTerm>) = match mode {
        AggregationMode::MaxMin => {
            let mut extremes: HashMap<usize, (f64, f64)> = HashMap::new();
            for a in attributions {
                for (&i, &v) in &a.values {
                    let e = extremes.entry(i).or_insert((v, v));
                    e.0 = e.0.min(v);
                    e.1 = e.1.max(v);
                }
            }
            let left = extremes
                .iter()
                .filter(|(_, e)| e.0 < 0.0)
                .map(|(&i, e)| RankedTerm { term: name(i), value: e.0 })
                .collect();
            let right = extremes
                .iter()
                .filter(|(_, e)| e.1 > 0.0)
                .map(|(&i, e)| RankedTerm { term: name(i), value: e.1 })
                .collect();
            (left, right)
        }
        AggregationMode::TotalSum => {
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for a in attributions {
                for (&i, &v) in &a.values {
                    *sums.entry(i).or_insert(0.0) += v;
                }
            }
            let (neg, pos): (Vec<_>, Vec<_>) = sums
                .into_iter()
                .filter(|(_, s)| *s != 0.0)
                .map(|(i, s)| RankedTerm { term: name(i), value: s })
                .partition(|t| t.value < 0.0);
            (neg, pos)
        }
    };
    left.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| a.term.cmp(&b.term)));
    right.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.term.cmp(&b.term)));
    Ok(AggregateReport {
        mode,
        n_documents: attributions.len(),
        left_tokens: left,
        right_tokens: right,
        warning: (mode == AggregationMode::TotalSum).then(|| TOTAL_SUM_WARNING.to_string()),
    })
}
