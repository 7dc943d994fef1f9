//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each, and exits non-zero when any criterion fails.
//!
//! Oracles (permutation Shapley, projected-gradient dual solver, Bayes
//! accuracy of the generator, n-gram document frequencies) are written here
//! independently of the library code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use leaning::corpus::{self, Leaning};
use leaning::evaluation::{self, CvOptions, HyperGrid};
use leaning::explain::{self, AggregationMode, ShapConfig, ShapMode};
use leaning::features::{self, MaxDfScope, NgramRange, VectorizerConfig};
use leaning::pipeline::{PipelineConfig, Workspace};
use leaning::sparse::SparseVector;
use leaning::svm::{self, LinearSvmModel, SolverReport, TrainConfig, CLASS_ENCODING};
use leaning::synthetic::{self, SyntheticConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AXIOM_TOL: f64 = 1e-9;
const KERNEL_FULL_TOL: f64 = 1e-6;
const LINEAR_TOL: f64 = 1e-9;
const SVM_WEIGHT_TOL: f64 = 1e-3;
const ORACLE_PG_TOL: f64 = 1e-8;
/// Solver stopping tolerance for the oracle fixtures. The library default
/// (1e-3 on the projected gradient) leaves weight errors up to ~2e-3 on
/// C = 10 fixtures, so the fixtures run one decade tighter.
const FIXTURE_SOLVER_TOL: f64 = 1e-4;
const DUALITY_GAP_REL: f64 = 1e-2;
const PLANTED_MIN_ACCURACY: f64 = 0.95;
const PLANTED_MIN_IMPORTANCE_HITS: usize = 8;
const PLANTED_MIN_SHAP_HITS: usize = 7;
const RANK_AGREEMENT: f64 = 0.70;
const NORM_TOL: f64 = 1e-9;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, start: Instant) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    ensure(start.elapsed() < budget, || format!("took {secs:.1}s, budget {}s", budget.as_secs()))?;
    Ok(secs)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn model(weights: Vec<f64>, bias: f64) -> LinearSvmModel {
    LinearSvmModel {
        weights,
        bias,
        c: 1.0,
        class_encoding: CLASS_ENCODING.into(),
        solver_report: SolverReport {
            iterations: 0,
            max_projected_gradient_violation: 0.0,
            converged: true,
        },
    }
}

// ---------------------------------------------------------------- criterion 1

/// Random game on dense features with a known symmetric pair and a dummy.
struct RandomScorer {
    bias: f64,
    w: Vec<f64>,
    q: Vec<Vec<f64>>,
    u: Vec<f64>,
    amp: f64,
}

impl RandomScorer {
    fn eval(&self, x: &[f64]) -> f64 {
        let m = x.len();
        let mut out = self.bias;
        for i in 0..m {
            out += self.w[i] * x[i];
            for j in i + 1..m {
                out += self.q[i][j] * x[i] * x[j];
            }
        }
        let t: f64 = self.u.iter().zip(x).map(|(u, v)| u * v).sum();
        out + self.amp * t.tanh()
    }
}

struct Game {
    scorer: RandomScorer,
    x: Vec<f64>,
    bg: Vec<f64>,
    pair: Option<(usize, usize)>,
    dummy: Option<usize>,
}

fn random_game(rng: &mut ChaCha8Rng, m: usize) -> Game {
    let val = |rng: &mut ChaCha8Rng| rng.gen_range(-2.0..2.0);
    let mut w: Vec<f64> = (0..m).map(|_| val(rng)).collect();
    let mut q: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| val(rng) * 0.5).collect()).collect();
    let mut u: Vec<f64> = (0..m).map(|_| val(rng)).collect();
    // every coordinate differs from the background so all M features play
    let mut bg: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 0.0 } else { val(rng) }).collect();
    let mut x: Vec<f64> = bg.iter().map(|b| b + rng.gen_range(0.3..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();

    let mut dummy = None;
    let mut pair = None;
    if m >= 3 {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(rng);
        let (i, j, d) = (idx[0], idx[1], idx[2]);
        w[j] = w[i];
        u[j] = u[i];
        x[j] = x[i];
        bg[j] = bg[i];
        for l in 0..m {
            if l != i && l != j {
                let v = q[i.min(l)][i.max(l)];
                q[j.min(l)][j.max(l)] = v;
            }
        }
        w[d] = 0.0;
        u[d] = 0.0;
        for l in 0..m {
            q[d.min(l)][d.max(l)] = 0.0;
        }
        pair = Some((i, j));
        dummy = Some(d);
    }
    Game {
        scorer: RandomScorer {
            bias: val(rng),
            w,
            q,
            u,
            amp: val(rng),
        },
        x,
        bg,
        pair,
        dummy,
    }
}

/// Shapley values as the mean marginal contribution over all orderings.
fn permutation_oracle(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut phi = vec![0.0; m];
    let mut perm: Vec<usize> = (0..m).collect();
    let mut count = 0usize;
    // Heap's algorithm
    let mut c = vec![0usize; m];
    let visit = |perm: &[usize], phi: &mut [f64]| {
        let mut cur = bg.to_vec();
        let mut prev = f(&cur);
        for &p in perm {
            cur[p] = x[p];
            let next = f(&cur);
            phi[p] += next - prev;
            prev = next;
        }
    };
    visit(&perm, &mut phi);
    count += 1;
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut phi);
            count += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|v| v / count as f64).collect()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let n_scorers = 120;
    let (mut worst_axiom, mut worst_kernel, mut worst_linear, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..n_scorers {
        let m = 1 + trial % 12;
        let g = random_game(&mut rng, m);
        let x = SparseVector::from_dense(&g.x);
        let bg = SparseVector::from_dense(&g.bg);
        let scorer = |v: &SparseVector| g.scorer.eval(&v.to_dense());
        let dense = |v: &[f64]| g.scorer.eval(v);
        let exact = explain::exact_shapley(&scorer, &x, &bg).map_err(|e| e.to_string())?;
        let phi: Vec<f64> = (0..m).map(|i| exact.get(i)).collect();

        let eff = (exact.base_value + phi.iter().sum::<f64>() - g.scorer.eval(&g.x)).abs();
        let base = (exact.base_value - g.scorer.eval(&g.bg)).abs();
        worst_axiom = worst_axiom.max(eff).max(base);
        if let Some((i, j)) = g.pair {
            worst_axiom = worst_axiom.max((phi[i] - phi[j]).abs());
        }
        if let Some(d) = g.dummy {
            worst_axiom = worst_axiom.max(phi[d].abs());
        }
        if m <= 7 {
            worst_oracle = worst_oracle.max(linf(&phi, &permutation_oracle(&dense, &g.x, &g.bg)));
        }

        let cfg = ShapConfig {
            n_samples: (1usize << m).max(2 * m + 4),
            mode: ShapMode::Kernel,
            seed: trial as u64,
            ..ShapConfig::default()
        };
        let kern = explain::kernel_shap(&scorer, &x, &bg, &cfg).map_err(|e| e.to_string())?;
        worst_kernel = worst_kernel.max(linf(&phi, &(0..m).map(|i| kern.get(i)).collect::<Vec<_>>()));

        let lin_model = model(g.scorer.w.clone(), g.scorer.bias);
        let lin = explain::linear_shap(&lin_model, &g.bg, &x).map_err(|e| e.to_string())?;
        let lin_exact = explain::exact_shapley(&lin_model, &x, &bg).map_err(|e| e.to_string())?;
        let a: Vec<f64> = (0..m).map(|i| lin.get(i)).collect();
        let b: Vec<f64> = (0..m).map(|i| lin_exact.get(i)).collect();
        worst_linear = worst_linear
            .max(linf(&a, &b))
            .max((lin.base_value - lin_exact.base_value).abs());
    }
    ensure(worst_axiom <= AXIOM_TOL, || format!("axiom violation {worst_axiom:.2e} > {AXIOM_TOL:e}"))?;
    ensure(worst_oracle <= AXIOM_TOL, || format!("exact vs permutation oracle {worst_oracle:.2e}"))?;
    ensure(worst_kernel <= KERNEL_FULL_TOL, || format!("kernel vs exact {worst_kernel:.2e} > {KERNEL_FULL_TOL:e}"))?;
    ensure(worst_linear <= LINEAR_TOL, || format!("linear vs exact {worst_linear:.2e} > {LINEAR_TOL:e}"))?;
    let secs = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{n_scorers} scorers, M<=12: axioms {worst_axiom:.1e}, permutation oracle {worst_oracle:.1e}, \
         kernel {worst_kernel:.1e}, linear {worst_linear:.1e}, {secs:.1}s"
    ))
}

// ---------------------------------------------------------------- criterion 2

/// Minimizes `½αᵀQα − Σα` over the box `[0, C]ⁿ` by accelerated projected
/// gradient, `Q = yyᵀ ∘ (XXᵀ + 1)`. Returns `(w, b, max projected-gradient
/// violation)`.
fn pg_dual_oracle(x: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64, f64) {
    let n = x.len();
    let d = x[0].len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| y[i] * y[j] * (x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0))
                .collect()
        })
        .collect();
    let lipschitz: f64 = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let step = 1.0 / lipschitz;
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - 1.0).collect();
        let next: Vec<f64> = (0..n).map(|i| (z[i] - step * grad[i]).clamp(0.0, c)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = linf(&next, &alpha);
        z = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - alpha[i])).collect();
        alpha = next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for i in 0..n {
        for k in 0..d {
            w[k] += alpha[i] * y[i] * x[i][k];
        }
        b += alpha[i] * y[i];
    }
    let violation = (0..n)
        .map(|i| {
            let g = q[i].iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            if alpha[i] <= 0.0 {
                (-g).max(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max);
    (w, b, violation)
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let (mut worst_w, mut worst_gap, mut worst_default) = (0.0f64, 0.0f64, 0.0f64);
    let n_fixtures = 25;
    for f in 0..n_fixtures {
        let n = rng.gen_range(2..=10);
        let d = rng.gen_range(1..=3);
        let c = [0.1, 1.0, 10.0][f % 3];
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = -1.0;
        y[1] = 1.0;
        let xs: Vec<SparseVector> = pts.iter().map(|p| SparseVector::from_dense(p)).collect();
        let labels: Vec<Leaning> = y.iter().map(|&v| Leaning::from_decision(v)).collect();
        let cfg = TrainConfig {
            seed: f as u64,
            tol: FIXTURE_SOLVER_TOL,
            ..TrainConfig::with_c(c)
        };
        let (m, alpha) = svm::solve_dual(&xs, &labels, &cfg).map_err(|e| format!("fixture {f}: {e}"))?;
        let (w_ref, b_ref, oracle_pg) = pg_dual_oracle(&pts, &y, c);
        ensure(oracle_pg <= ORACLE_PG_TOL, || format!("fixture {f}: oracle stalled at violation {oracle_pg:.1e}"))?;
        let mut got = m.weights.clone();
        got.push(m.bias);
        let mut want = w_ref;
        want.push(b_ref);
        let err = linf(&got, &want);
        let primal = m.primal_objective(&xs, &labels);
        let gap = primal - svm::dual_objective(&alpha, &xs, &labels);
        ensure(err <= SVM_WEIGHT_TOL, || format!("fixture {f} (n={n}, d={d}, C={c}): |w - w*| = {err:.2e}"))?;
        ensure(gap <= DUALITY_GAP_REL * (1.0 + primal.abs()) && gap >= -1e-9, || {
            format!("fixture {f}: duality gap {gap:.2e} vs primal {primal:.3}")
        })?;
        worst_w = worst_w.max(err);
        let default = svm::train_svm(&xs, &labels, &TrainConfig { seed: f as u64, ..TrainConfig::with_c(c) })
            .map_err(|e| e.to_string())?;
        let mut got_default = default.weights;
        got_default.push(default.bias);
        worst_default = worst_default.max(linf(&got_default, &want));
        worst_gap = worst_gap.max(gap / (1.0 + primal.abs()));
    }
    let secs = within(Duration::from_secs(10), start)?;
    Ok(format!(
        "{n_fixtures} fixtures at solver tol {FIXTURE_SOLVER_TOL:e}: max |w - w*| {worst_w:.1e}, max relative \
         duality gap {worst_gap:.1e} (default tol 1e-3 gives {worst_default:.1e}), {secs:.2}s"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let coeff: f64 = (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product();
            coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        })
        .collect()
}

/// Accuracy of the optimal rule for the generator, treating marker presence
/// as independent draws: own markers ~ Bin(n, p_own), other ~ Bin(n, p_other),
/// and the log-likelihood ratio reduces to comparing the two counts.
fn bayes_accuracy(n_markers: u64, p_own: f64, p_other: f64) -> f64 {
    let a = binomial_pmf(n_markers, p_own);
    let b = binomial_pmf(n_markers, p_other);
    let mut acc = 0.0;
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            acc += pa * pb * match i.cmp(&j) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    acc
}

fn labeled(corpus: &synthetic::SyntheticCorpus) -> Result<corpus::LabeledDataset, String> {
    let ds = corpus::assign_leanings(&corpus.speeches, &corpus.registry);
    corpus::select_by_topic(&ds, &corpus.lexicon).map(|(d, _)| d).map_err(|e| e.to_string())
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let gen = SyntheticConfig::default();
    let bayes = bayes_accuracy(gen.n_markers as u64, gen.p_own, gen.p_other);
    ensure(bayes >= PLANTED_MIN_ACCURACY, || {
        format!("generator Bayes accuracy {bayes:.4} is below the {PLANTED_MIN_ACCURACY} target; target uncalibrated")
    })?;
    let corpus = synthetic::generate(&gen);
    let ds = labeled(&corpus)?;
    ensure(ds.len() == 400, || format!("expected 400 speeches, got {}", ds.len()))?;
    let grid = HyperGrid::default();
    let opts = CvOptions {
        stopwords: corpus.stopwords.clone(),
        ..CvOptions::default()
    };
    let report = evaluation::nested_cv(&ds, &grid, &opts).map_err(|e| e.to_string())?;
    ensure(report.mean_accuracy >= PLANTED_MIN_ACCURACY, || {
        format!("nested-CV accuracy {:.4} < {PLANTED_MIN_ACCURACY}", report.mean_accuracy)
    })?;

    let params = evaluation::best_params(&report).ok_or("no parameters chosen")?;
    let pipe = evaluation::train_final(&ds, params, &grid, &opts).map_err(|e| e.to_string())?;
    let vocab = &pipe.tfidf.vocabulary;
    let imp = explain::svm_feature_importance(&pipe.svm, vocab, 10).map_err(|e| e.to_string())?;
    let hits = |list: &[explain::RankedTerm], markers: &[String]| list.iter().filter(|t| markers.contains(&t.term)).count();
    let (imp_l, imp_r) = (hits(&imp.left_terms, &corpus.left_markers), hits(&imp.right_terms, &corpus.right_markers));
    ensure(imp_l >= PLANTED_MIN_IMPORTANCE_HITS && imp_r >= PLANTED_MIN_IMPORTANCE_HITS, || {
        format!("importance recovered {imp_l}/10 left, {imp_r}/10 right markers")
    })?;

    let vectors = pipe.tfidf.transform_all(&ds.documents());
    let means = vec![0.0; pipe.tfidf.dims()];
    let attrs = vectors
        .iter()
        .map(|x| explain::linear_shap(&pipe.svm, &means, x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let agg = explain::aggregate_attributions(&attrs, AggregationMode::MaxMin, vocab.terms())
        .map_err(|e| e.to_string())?
        .top(10);
    let (shap_l, shap_r) = (hits(&agg.left_tokens, &corpus.left_markers), hits(&agg.right_tokens, &corpus.right_markers));
    ensure(shap_l >= PLANTED_MIN_SHAP_HITS && shap_r >= PLANTED_MIN_SHAP_HITS, || {
        format!("MaxMin Shapley recovered {shap_l}/10 left, {shap_r}/10 right markers")
    })?;

    let overlap = |a: &[explain::RankedTerm], b: &[explain::RankedTerm]| {
        let sa: BTreeSet<&str> = a.iter().map(|t| t.term.as_str()).collect();
        b.iter().filter(|t| sa.contains(t.term.as_str())).count() as f64 / a.len().max(1) as f64
    };
    let agree = overlap(&imp.left_terms, &agg.left_tokens).min(overlap(&imp.right_terms, &agg.right_tokens));
    ensure(agree >= RANK_AGREEMENT, || format!("rank agreement {agree:.2} < {RANK_AGREEMENT}"))?;
    let secs = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "accuracy {:.3} ± {:.3} (Bayes {bayes:.4}), importance {imp_l}+{imp_r}/20, MaxMin {shap_l}+{shap_r}/20, \
         agreement {agree:.2}, {secs:.1}s",
        report.mean_accuracy, report.ci95_half_width
    ))
}

// ---------------------------------------------------------------- criterion 4

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from).filter(|p| p.exists())
}

fn criterion_4() -> Outcome {
    let (Some(speeches), Some(registry), Some(keywords)) = (
        env_path("LEANING_REAL_SPEECHES"),
        env_path("LEANING_REAL_REGISTRY"),
        env_path("LEANING_REAL_KEYWORDS"),
    ) else {
        return Outcome::Skip(
            "real corpus not provided (set LEANING_REAL_SPEECHES, LEANING_REAL_REGISTRY, LEANING_REAL_KEYWORDS)".into(),
        );
    };
    let run = || -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = PipelineConfig::default();
        cfg.paths.workdir = dir.path().to_path_buf();
        cfg.paths.speeches = Some(speeches.clone());
        cfg.paths.registry = Some(registry.clone());
        cfg.paths.keywords = Some(keywords.clone());
        cfg.paths.stopwords = env_path("LEANING_REAL_STOPWORDS");
        if let Some(f) = std::env::var("LEANING_REAL_FORMAT").ok().and_then(|f| f.parse().ok()) {
            cfg.paths.speeches_format = f;
        }
        cfg.grid.ngram_ranges = vec![NgramRange(1, 3)];
        let mut ws = Workspace::open(cfg).map_err(|e| e.to_string())?;
        ws.ingest().map_err(|e| e.to_string())?;
        ws.select().map_err(|e| e.to_string())?;
        let s = ws.stats().map_err(|e| e.to_string())?.stats;
        let row = (
            s.n_speeches_total,
            s.n_speakers_total,
            format!("{:.1}", s.share_left * 100.0),
            format!("{:.1}", s.share_right * 100.0),
            format!("{:.1}", s.avg_words_per_speech),
            format!("{:.1}", s.median_speeches_per_speaker),
        );
        let want = (2974, 153, "51.1".to_string(), "48.9".to_string(), "854.7".to_string(), "12.0".to_string());
        ensure(row == want, || format!("statistics {row:?} != {want:?}"))?;
        let e = ws.evaluate().map_err(|e| e.to_string())?;
        let r = &e.rows[0];
        let (lo, hi) = (r.mean_accuracy - r.ci95_half_width, r.mean_accuracy + r.ci95_half_width);
        ensure(hi >= 0.913 - 0.02 && lo <= 0.913 + 0.02, || {
            format!("accuracy {:.3} ± {:.3} does not overlap 0.913 ± 0.02", r.mean_accuracy, r.ci95_half_width)
        })?;
        Ok(format!("{row:?}, accuracy {:.3} ± {:.3}", r.mean_accuracy, r.ci95_half_width))
    };
    match run() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

// ---------------------------------------------------------------- criterion 5

fn full_run(inputs: &synthetic::InputFiles, workdir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 11;
    cfg.paths.workdir = workdir.to_path_buf();
    cfg.paths.speeches = Some(inputs.speeches.clone());
    cfg.paths.registry = Some(inputs.registry.clone());
    cfg.paths.keywords = Some(inputs.keywords.clone());
    cfg.paths.stopwords = Some(inputs.stopwords.clone());
    cfg.grid.c_values = vec![0.1, 1.0, 10.0];
    let mut ws = Workspace::open(cfg).map_err(|e| e.to_string())?;
    ws.ingest().map_err(|e| e.to_string())?;
    ws.select().map_err(|e| e.to_string())?;
    ws.stats().map_err(|e| e.to_string())?;
    ws.evaluate().map_err(|e| e.to_string())?;
    ws.train(None).map_err(|e| e.to_string())?;
    ws.explain().map_err(|e| e.to_string())?;
    ws.report().map_err(|e| e.to_string())?;
    drop(ws);
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(workdir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn criterion_5() -> Check {
    let corpus = synthetic::generate(&SyntheticConfig {
        per_class: 60,
        n_center: 5,
        n_off_topic: 5,
        ..SyntheticConfig::default()
    });
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = corpus.write_inputs(&dir.path().join("input")).map_err(|e| e.to_string())?;
    let a = full_run(&inputs, &dir.path().join("run-a"))?;
    let b = full_run(&inputs, &dir.path().join("run-b"))?;
    ensure(a.len() >= 9, || format!("only {} JSON artifacts written", a.len()))?;
    ensure(a.keys().eq(b.keys()), || "runs wrote different artifact sets".into())?;
    for (name, bytes) in &a {
        ensure(b[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    for bytes in a.values() {
        let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        ensure(v.get("schema_version").is_some(), || "artifact without schema_version".into())?;
    }
    Ok(format!("{} JSON artifacts byte-identical across two runs", a.len()))
}

// ---------------------------------------------------------------- criterion 6

/// Document frequency of every n-gram, stopword positions breaking runs.
fn oracle_doc_freq(docs: &[Vec<String>], lo: usize, hi: usize, stop: &BTreeSet<String>) -> BTreeMap<String, usize> {
    let mut df = BTreeMap::new();
    for doc in docs {
        let mut seen = BTreeSet::new();
        for start in 0..doc.len() {
            for n in lo..=hi {
                let end = start + n;
                if end > doc.len() || doc[start..end].iter().any(|t| stop.contains(t)) {
                    continue;
                }
                seen.insert(doc[start..end].join(" "));
            }
        }
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    df
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let lexicon: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
    let stop: BTreeSet<String> = ["in", "je"].iter().map(|s| s.to_string()).collect();
    let docs: Vec<Vec<String>> = (0..1000)
        .map(|_| {
            let len = rng.gen_range(0..40);
            (0..len)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        ["in", "je"][rng.gen_range(0..2)].to_string()
                    } else {
                        // skewed draw so both df bounds bind
                        let r: f64 = rng.gen();
                        lexicon[((r * r * r) * lexicon.len() as f64) as usize].clone()
                    }
                })
                .collect()
        })
        .collect();
    let cfg = VectorizerConfig {
        ngram_range: NgramRange(1, 3),
        stopwords: stop.clone(),
        min_df: 5,
        max_df_frac: 0.35,
        max_df_scope: MaxDfScope::AllTerms,
        l2_normalize: true,
    };
    let (tfidf, vectors) = features::fit_vectorizer(&docs, &cfg).map_err(|e| e.to_string())?;
    let mut worst_norm = 0.0f64;
    for v in vectors.iter().filter(|v| v.nnz() > 0) {
        worst_norm = worst_norm.max((v.norm() - 1.0).abs());
    }
    ensure(worst_norm <= NORM_TOL, || format!("norm deviation {worst_norm:.2e}"))?;

    let max_df = 350; // floor(0.35 * 1000)
    let oracle = oracle_doc_freq(&docs, 1, 3, &stop);
    let expected: BTreeSet<&str> = oracle
        .iter()
        .filter(|(_, &d)| (5..=max_df).contains(&d))
        .map(|(t, _)| t.as_str())
        .collect();
    let vocab = &tfidf.vocabulary;
    for (i, term) in vocab.terms().iter().enumerate() {
        let df = vocab.doc_freq()[i];
        ensure(oracle.get(term) == Some(&df), || format!("df of `{term}`: {df} vs oracle {:?}", oracle.get(term)))?;
        ensure((5..=max_df).contains(&df), || format!("`{term}` df {df} outside [5, {max_df}]"))?;
    }
    let got: BTreeSet<&str> = vocab.terms().iter().map(String::as_str).collect();
    ensure(got == expected, || format!("vocabulary has {} terms, oracle {}", got.len(), expected.len()))?;
    let pruned_high = oracle.values().filter(|&&d| d > max_df).count();
    let pruned_low = oracle.values().filter(|&&d| d < 5).count();
    ensure(pruned_high > 0 && pruned_low > 0, || "fuzz corpus does not exercise both df bounds".into())?;

    let mut n_plans = 0;
    for trial in 0..300u64 {
        let k = rng.gen_range(2..=10);
        let n_left = rng.gen_range(k..=k + 60);
        let n_right = rng.gen_range(k..=k + 60);
        let mut labels = vec![Leaning::Left; n_left];
        labels.extend(vec![Leaning::Right; n_right]);
        labels.shuffle(&mut rng);
        let plan = evaluation::stratified_kfold(&labels, k, trial).map_err(|e| e.to_string())?;
        ensure(plan.assignments.len() == labels.len() && plan.assignments.iter().all(|&f| f < k), || {
            "fold plan is not a partition".into()
        })?;
        let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_indices(f)).collect();
        all.sort_unstable();
        ensure(all == (0..labels.len()).collect::<Vec<_>>(), || "test folds do not partition the data".into())?;
        for class in [Leaning::Left, Leaning::Right] {
            let mut per_fold = vec![0usize; k];
            for (i, &f) in plan.assignments.iter().enumerate() {
                if labels[i] == class {
                    per_fold[f] += 1;
                }
            }
            let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
            ensure(spread <= 1, || format!("{class} fold sizes {per_fold:?}"))?;
        }
        n_plans += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(format!(
        "1000 docs: {} nonzero vectors, max |norm-1| {worst_norm:.1e}, {} terms match df oracle \
         ({pruned_low} below min_df, {pruned_high} above max_df pruned); {n_plans} fold plans balanced, {secs:.1}s",
        vectors.iter().filter(|v| v.nnz() > 0).count(),
        vocab.len()
    ))
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 shapley axioms", Box::new(|| criterion_1().into())),
        ("2 svm solver oracle", Box::new(|| criterion_2().into())),
        ("3 planted signal", Box::new(|| criterion_3().into())),
        ("4 real corpus statistics", Box::new(criterion_4)),
        ("5 determinism", Box::new(|| criterion_5().into())),
        ("6 feature pipeline contracts", Box::new(|| criterion_6().into())),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(m) => println!("PASS criterion {name}: {m}"),
            Outcome::Skip(m) => println!("SKIP criterion {name}: {m}"),
            Outcome::Fail(m) => {
                failed += 1;
                println!("FAIL criterion {name}: {m}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

impl From<Check> for Outcome {
    fn from(c: Check) -> Self {
        match c {
            Ok(m) => Outcome::Pass(m),
            Err(m) => Outcome::Fail(m),
        }
    }
}

