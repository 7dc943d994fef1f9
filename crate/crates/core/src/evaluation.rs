//! Stratified folds, nested cross-validation, and final-model training.
//!
//! Every fit (inner or outer) rebuilds the vocabulary and TF-IDF weights on
//! its own training split only.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{LabeledDataset, Leaning};
use crate::features::{self, FeatureError, MaxDfScope, NgramRange, TfidfModel, VectorizerConfig, Vocabulary};
use crate::sparse::SparseVector;
use crate::svm::{self, LinearSvmModel, SvmError, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {class} has {count} examples, fewer than k={k} folds")]
    ClassTooSmall { class: Leaning, count: usize, k: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("no labels given")]
    NoLabels,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// Assignment of every example to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Shuffles each class under `seed` and deals its members round-robin over
/// the folds. The second class continues where the first stopped so fold
/// sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[Leaning], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for class in [Leaning::Left, Leaning::Right] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub ngram_ranges: Vec<NgramRange>,
    pub c_values: Vec<f64>,
    pub min_df: usize,
    pub max_df_frac: f64,
    #[serde(default)]
    pub max_df_scope: MaxDfScope,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            ngram_ranges: vec![NgramRange(1, 1), NgramRange(1, 2), NgramRange(1, 3)],
            c_values: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            min_df: 5,
            max_df_frac: 0.35,
            max_df_scope: MaxDfScope::AllTerms,
        }
    }
}

impl HyperGrid {
    /// The same grid restricted to one n-gram range.
    pub fn with_range(&self, range: NgramRange) -> Self {
        Self {
            ngram_ranges: vec![range],
            ..self.clone()
        }
    }

    pub fn vectorizer(&self, range: NgramRange, stopwords: &BTreeSet<String>) -> VectorizerConfig {
        VectorizerConfig {
            ngram_range: range,
            stopwords: stopwords.clone(),
            min_df: self.min_df,
            max_df_frac: self.max_df_frac,
            max_df_scope: self.max_df_scope,
            l2_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub ngram_range: NgramRange,
    pub c: f64,
}

impl HyperParams {
    /// Tie-break order: smaller C first, then smaller n-gram range.
    fn preference_key(&self) -> (f64, (usize, usize)) {
        (self.c, self.ngram_range.size_key())
    }

    fn prefer_over(&self, other: &Self) -> bool {
        let (a, b) = (self.preference_key(), other.preference_key());
        a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
    }
}

/// Settings shared by every fit that are not searched over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k_outer: 5,
            k_inner: 5,
            seed: 0,
            stopwords: BTreeSet::new(),
            svm_tol: 1e-3,
            svm_max_iter: 2000,
        }
    }
}

impl CvOptions {
    fn train_config(&self, c: f64) -> TrainConfig {
        TrainConfig {
            c,
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

/// Fitted TF-IDF vectorizer plus SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPipeline {
    pub params: HyperParams,
    pub tfidf: TfidfModel,
    pub svm: LinearSvmModel,
}

impl TextPipeline {
    pub fn fit<D: AsRef<[String]> + Sync>(
        docs: &[D],
        labels: &[Leaning],
        params: HyperParams,
        grid: &HyperGrid,
        opts: &CvOptions,
    ) -> Result<Self, EvalError> {
        let (tfidf, x) = features::fit_vectorizer(docs, &grid.vectorizer(params.ngram_range, &opts.stopwords))?;
        let svm = svm::train_svm(&x, labels, &opts.train_config(params.c))?;
        Ok(Self { params, tfidf, svm })
    }

    pub fn vectorize(&self, doc: &[String]) -> SparseVector {
        self.tfidf.transform(doc)
    }

    pub fn decision_value(&self, doc: &[String]) -> f64 {
        self.svm
            .decision_value(&self.vectorize(doc))
            .expect("vectorizer and svm share dimensionality")
    }

    pub fn predict(&self, doc: &[String]) -> Leaning {
        Leaning::from_decision(self.decision_value(doc))
    }

    pub fn accuracy<D: AsRef<[String]>>(&self, docs: &[D], labels: &[Leaning]) -> f64 {
        if docs.is_empty() {
            return 0.0;
        }
        let correct = docs
            .iter()
            .zip(labels)
            .filter(|(d, &y)| self.predict(d.as_ref()) == y)
            .count();
        correct as f64 / docs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFoldResult {
    pub fold: usize,
    pub chosen_params: HyperParams,
    pub inner_mean_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema_version: u32,
    pub model_name: String,
    pub grid: HyperGrid,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub per_outer_fold: Vec<OuterFoldResult>,
    pub mean_accuracy: f64,
    pub ci95_half_width: f64,
    /// How the interval was computed: Student t over outer-fold accuracies.
    pub ci_method: String,
    /// Majority-class share of the whole dataset.
    pub baseline_accuracy: f64,
}

pub const CI_METHOD: &str = "student_t_over_outer_folds";

/// Mean and 95% half-width `t(0.975, k−1)·s/√k` over fold accuracies.
/// The half-width is exactly zero when all accuracies are equal.
pub fn mean_with_ci(accuracies: &[f64]) -> (f64, f64) {
    let k = accuracies.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = accuracies.iter().sum::<f64>() / k as f64;
    if k == 1 || accuracies.iter().all(|&a| a == accuracies[0]) {
        return (mean, 0.0);
    }
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, t_quantile_975(k - 1) * var.sqrt() / (k as f64).sqrt())
}

pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Accuracy of always predicting the larger class.
pub fn majority_baseline(labels: &[Leaning]) -> Result<f64, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let left = labels.iter().filter(|&&l| l == Leaning::Left).count();
    Ok(left.max(labels.len() - left) as f64 / labels.len() as f64)
}

/// A vocabulary fit observed during cross-validation.
#[derive(Debug)]
pub struct FitEvent<'a> {
    pub outer_fold: usize,
    /// `None` for the refit on the whole outer-train split.
    pub inner_fold: Option<usize>,
    /// Dataset positions of the documents the vocabulary was fit on.
    pub train_indices: &'a [usize],
    pub vocabulary: &'a Vocabulary,
}

pub fn nested_cv(dataset: &LabeledDataset, grid: &HyperGrid, opts: &CvOptions) -> Result<CvReport, EvalError> {
    nested_cv_observed(dataset, grid, opts, &|_| {})
}

/// Nested CV that reports every vocabulary fit to `observer`.
pub fn nested_cv_observed(
    dataset: &LabeledDataset,
    grid: &HyperGrid,
    opts: &CvOptions,
    observer: &(dyn Fn(&FitEvent) + Sync),
) -> Result<CvReport, EvalError> {
    if grid.ngram_ranges.is_empty() || grid.c_values.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let docs = dataset.documents();
    let labels = dataset.labels();
    let outer = stratified_kfold(&labels, opts.k_outer, opts.seed)?;

    let per_outer_fold = (0..opts.k_outer)
        .into_par_iter()
        .map(|fold| run_outer_fold(&docs, &labels, &outer, fold, grid, opts, observer))
        .collect::<Result<Vec<_>, _>>()?;

    let accs: Vec<f64> = per_outer_fold.iter().map(|f| f.test_accuracy).collect();
    let (mean_accuracy, ci95_half_width) = mean_with_ci(&accs);
    Ok(CvReport {
        schema_version: SCHEMA_VERSION,
        model_name: model_name(grid),
        grid: grid.clone(),
        k_outer: opts.k_outer,
        k_inner: opts.k_inner,
        seed: opts.seed,
        per_outer_fold,
        mean_accuracy,
        ci95_half_width,
        ci_method: CI_METHOD.to_string(),
        baseline_accuracy: majority_baseline(&labels)?,
    })
}

pub fn model_name(grid: &HyperGrid) -> String {
    match grid.ngram_ranges.as_slice() {
        [single] => format!("Tf-Idf + Lin. SVM ({})", single.label()),
        _ => "Tf-Idf + Lin. SVM (n-gram search)".to_string(),
    }
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn run_outer_fold(
    docs: &[&[String]],
    labels: &[Leaning],
    outer: &FoldPlan,
    fold: usize,
    grid: &HyperGrid,
    opts: &CvOptions,
    observer: &(dyn Fn(&FitEvent) + Sync),
) -> Result<OuterFoldResult, EvalError> {
    let train_idx = outer.train_indices(fold);
    let test_idx = outer.test_indices(fold);
    let train_docs = pick(docs, &train_idx);
    let train_labels = pick(labels, &train_idx);

    let inner_seed = opts.seed.wrapping_add(1 + fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let inner = stratified_kfold(&train_labels, opts.k_inner, inner_seed)?;

    // accuracy[range][inner_fold][c]
    let tasks: Vec<(usize, usize)> = (0..grid.ngram_ranges.len())
        .flat_map(|r| (0..opts.k_inner).map(move |j| (r, j)))
        .collect();
    let scores = tasks
        .par_iter()
        .map(|&(r, j)| {
            let fit_local = inner.train_indices(j);
            let eval_local = inner.test_indices(j);
            let fit_docs = pick(&train_docs, &fit_local);
            let fit_labels = pick(&train_labels, &fit_local);
            let cfg = grid.vectorizer(grid.ngram_ranges[r], &opts.stopwords);
            let (tfidf, x) = features::fit_vectorizer(&fit_docs, &cfg)?;
            let global: Vec<usize> = fit_local.iter().map(|&i| train_idx[i]).collect();
            observer(&FitEvent {
                outer_fold: fold,
                inner_fold: Some(j),
                train_indices: &global,
                vocabulary: &tfidf.vocabulary,
            });
            let x_eval = tfidf.transform_all(&pick(&train_docs, &eval_local));
            let y_eval = pick(&train_labels, &eval_local);
            grid.c_values
                .iter()
                .map(|&c| {
                    let model = svm::train_svm(&x, &fit_labels, &opts.train_config(c))?;
                    Ok(svm::accuracy(&model, &x_eval, &y_eval)?)
                })
                .collect::<Result<Vec<f64>, EvalError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut best: Option<(HyperParams, f64)> = None;
    for (r, &range) in grid.ngram_ranges.iter().enumerate() {
        for (ci, &c) in grid.c_values.iter().enumerate() {
            let mean = (0..opts.k_inner)
                .map(|j| scores[r * opts.k_inner + j][ci])
                .sum::<f64>()
                / opts.k_inner as f64;
            let cand = HyperParams { ngram_range: range, c };
            let better = match &best {
                None => true,
                Some((p, m)) => mean > *m + 1e-12 || ((mean - m).abs() <= 1e-12 && cand.prefer_over(p)),
            };
            if better {
                best = Some((cand, mean));
            }
        }
    }
    let (chosen_params, inner_mean_accuracy) = best.expect("grid is non-empty");

    let pipeline = TextPipeline::fit(&train_docs, &train_labels, chosen_params, grid, opts)?;
    observer(&FitEvent {
        outer_fold: fold,
        inner_fold: None,
        train_indices: &train_idx,
        vocabulary: &pipeline.tfidf.vocabulary,
    });
    let test_docs = pick(docs, &test_idx);
    let test_labels = pick(labels, &test_idx);
    Ok(OuterFoldResult {
        fold,
        chosen_params,
        inner_mean_accuracy,
        test_accuracy: pipeline.accuracy(&test_docs, &test_labels),
        n_train: train_idx.len(),
        n_test: test_idx.len(),
    })
}

/// Most frequently chosen parameters across outer folds; ties go to the
/// smaller C, then the smaller n-gram range.
pub fn best_params(report: &CvReport) -> Option<HyperParams> {
    let mut tally: Vec<(HyperParams, usize)> = Vec::new();
    for f in &report.per_outer_fold {
        match tally.iter_mut().find(|(p, _)| *p == f.chosen_params) {
            Some((_, n)) => *n += 1,
            None => tally.push((f.chosen_params, 1)),
        }
    }
    tally
        .into_iter()
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0.prefer_over(&a.0)) {
                b
            } else {
                a
            }
        })
        .map(|(p, _)| p)
}

/// Fits vocabulary, TF-IDF and SVM on the full dataset.
pub fn train_final(
    dataset: &LabeledDataset,
    params: HyperParams,
    grid: &HyperGrid,
    opts: &CvOptions,
) -> Result<TextPipeline, EvalError> {
    TextPipeline::fit(&dataset.documents(), &dataset.labels(), params, grid, opts)
}

/// Count of each class per fold, `[left, right]`.
pub fn fold_class_counts(plan: &FoldPlan, labels: &[Leaning]) -> Vec<[usize; 2]> {
    let mut counts = vec![[0usize; 2]; plan.k];
    for (&f, &l) in plan.assignments.iter().zip(labels) {
        counts[f][(l == Leaning::Right) as usize] += 1;
    }
    counts
}

/// Every candidate term (before df filtering) occurring in `docs`.
pub fn term_set<D: AsRef<[String]>>(docs: &[D], cfg: &VectorizerConfig) -> BTreeSet<String> {
    docs.iter()
        .flat_map(|d| features::extract_terms(d.as_ref(), cfg.ngram_range, &cfg.stopwords))
        .collect()
}
