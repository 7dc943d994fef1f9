//! L2-regularized hinge-loss linear SVM trained by dual coordinate descent.
//!
//! The bias is learned as the weight of an implicit constant feature of
//! value 1 appended to every example, so it is regularized together with
//! the hyperplane weights. Labels are encoded left = −1, right = +1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Leaning;
use crate::sparse::SparseVector;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("need at least two training examples, got {0}")]
    TooFewExamples(usize),
    #[error("training labels contain a single class ({0})")]
    SingleClass(Leaning),
    #[error("example {0} has non-finite feature values")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Standard hinge loss, `max(0, 1 − y·f(x))`.
    #[default]
    HingeL1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shrinking")]
    pub shrinking: bool,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    2000
}

fn default_shrinking() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: default_tol(),
            max_iter: default_max_iter(),
            loss: Loss::HingeL1,
            seed: 0,
            shrinking: true,
        }
    }
}

impl TrainConfig {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Completed epochs over the (possibly shrunk) active set.
    pub iterations: usize,
    /// Largest projected-gradient magnitude seen in the final full pass.
    pub max_projected_gradient_violation: f64,
    pub converged: bool,
}

pub const CLASS_ENCODING: &str = "left=-1,right=+1";

fn class_encoding() -> String {
    CLASS_ENCODING.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Hyperplane normal, one weight per feature column. The bias column is
    /// kept separately in `bias`.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    #[serde(default = "class_encoding")]
    pub class_encoding: String,
    pub solver_report: SolverReport,
}

impl LinearSvmModel {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    /// `w·x + b`.
    pub fn decision_value(&self, x: &SparseVector) -> Result<f64, SvmError> {
        if x.dims() != self.weights.len() {
            return Err(SvmError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.dims(),
            });
        }
        Ok(x.dot_dense(&self.weights) + self.bias)
    }

    /// A decision value of exactly zero is classified as `Left`.
    pub fn predict(&self, x: &SparseVector) -> Result<Leaning, SvmError> {
        self.decision_value(x).map(Leaning::from_decision)
    }

    /// `½(‖w‖² + b²) + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))`, the objective the
    /// solver minimizes (bias regularized through the constant feature).
    pub fn primal_objective(&self, x: &[SparseVector], y: &[Leaning]) -> f64 {
        let reg = 0.5 * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let hinge: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (1.0 - yi.sign() * (xi.dot_dense(&self.weights) + self.bias)).max(0.0))
            .sum();
        reg + self.c * hinge
    }
}

/// `Σα − ½‖Σ yᵢαᵢ x̃ᵢ‖²` where `x̃` carries the constant bias feature.
pub fn dual_objective(alpha: &[f64], x: &[SparseVector], y: &[Leaning]) -> f64 {
    let dims = x.first().map_or(0, SparseVector::dims);
    let mut w = vec![0.0; dims];
    let mut b = 0.0;
    for ((a, xi), yi) in alpha.iter().zip(x).zip(y) {
        xi.axpy_into(a * yi.sign(), &mut w);
        b += a * yi.sign();
    }
    alpha.iter().sum::<f64>() - 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b)
}

fn validate(x: &[SparseVector], y: &[Leaning], cfg: &TrainConfig) -> Result<usize, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::LengthMismatch {
            features: x.len(),
            labels: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(SvmError::TooFewExamples(x.len()));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(SvmError::SingleClass(y[0]));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(SvmError::InvalidConfig(format!("C must be positive, got {}", cfg.c)));
    }
    if !(cfg.tol > 0.0) {
        return Err(SvmError::InvalidConfig(format!("tol must be positive, got {}", cfg.tol)));
    }
    let dims = x[0].dims();
    for (i, xi) in x.iter().enumerate() {
        if xi.dims() != dims {
            return Err(SvmError::DimensionMismatch {
                expected: dims,
                found: xi.dims(),
            });
        }
        if !xi.is_finite() {
            return Err(SvmError::NonFinite(i));
        }
    }
    Ok(dims)
}

pub fn train_svm(x: &[SparseVector], y: &[Leaning], cfg: &TrainConfig) -> Result<LinearSvmModel, SvmError> {
    solve_dual(x, y, cfg).map(|(model, _)| model)
}

/// Trains and also returns the dual variables `α`, one per example.
pub fn solve_dual(
    x: &[SparseVector],
    y: &[Leaning],
    cfg: &TrainConfig,
) -> Result<(LinearSvmModel, Vec<f64>), SvmError> {
    let dims = validate(x, y, cfg)?;
    let n = x.len();
    let c = cfg.c;
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let qd: Vec<f64> = x.iter().map(|xi| xi.squared_norm() + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dims];
    let mut b = 0.0;
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // shrinking thresholds from the previous pass
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;

    while iterations < cfg.max_iter {
        index[..active].shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;

        let mut s = 0;
        while s < active {
            let i = index[s];
            let g = ys[i] * (x[i].dot_dense(&w) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if cfg.shrinking && g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if cfg.shrinking && g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);

            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * ys[i];
                x[i].axpy_into(delta, &mut w);
                b += delta;
            }
            s += 1;
        }
        iterations += 1;

        if active == 0 {
            pg_max = 0.0;
            pg_min = 0.0;
        }
        let pass_violation = pg_max.max(-pg_min).max(0.0);
        if pass_violation < cfg.tol {
            if active == n {
                violation = pass_violation;
                converged = true;
                break;
            }
            // shrunk set converged; recheck everything
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        if active == n {
            violation = pass_violation;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }

    if !converged {
        log::warn!(
            "dual coordinate descent stopped after {iterations} epochs without reaching tol {} (C={c})",
            cfg.tol
        );
    }

    let model = LinearSvmModel {
        weights: w,
        bias: b,
        c,
        class_encoding: class_encoding(),
        solver_report: SolverReport {
            iterations,
            max_projected_gradient_violation: violation,
            converged,
        },
    };
    Ok((model, alpha))
}

/// Fraction of examples whose predicted leaning matches the label.
pub fn accuracy(model: &LinearSvmModel, x: &[SparseVector], y: &[Leaning]) -> Result<f64, SvmError> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (xi, &yi) in x.iter().zip(y) {
        if model.predict(xi)? == yi {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Leaning::{Left, Right};

    fn dense(rows: &[&[f64]]) -> Vec<SparseVector> {
        rows.iter().map(|r| SparseVector::from_dense(r)).collect()
    }

    fn tight(c: f64) -> TrainConfig {
        TrainConfig {
            c,
            tol: 1e-8,
            max_iter: 100_000,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn two_point_max_margin() {
        // With the bias regularized through a constant feature the optimum of
        // ½(w₁² + b²) s.t. margins ≥ 1 on (±1, 0) is w = (1, 0), b = 0.
        let x = dense(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let y = [Left, Right];
        let m = train_svm(&x, &y, &tight(1e3)).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-6, "{:?}", m.weights);
        assert!(m.weights[1].abs() < 1e-12);
        assert!(m.bias.abs() < 1e-6);
        for (xi, yi) in x.iter().zip(y) {
            let margin = yi.sign() * m.decision_value(xi).unwrap();
            assert!((margin - 1.0).abs() < 1e-6);
        }

        let scaled = dense(&[&[-2.0, 0.0], &[2.0, 0.0]]);
        let m2 = train_svm(&scaled, &y, &tight(1e3)).unwrap();
        assert_eq!(m2.predict(&scaled[0]).unwrap(), Left);
        assert_eq!(m2.predict(&scaled[1]).unwrap(), Right);
    }

    #[test]
    fn separable_four_points_fit_exactly() {
        let x = dense(&[&[0.0, 2.0], &[1.0, 3.0], &[3.0, 0.0], &[4.0, 1.0]]);
        let y = [Left, Left, Right, Right];
        let m = train_svm(&x, &y, &TrainConfig::with_c(10.0)).unwrap();
        assert_eq!(accuracy(&m, &x, &y).unwrap(), 1.0);
        assert!(m.solver_report.converged);
        assert!(m.solver_report.max_projected_gradient_violation < 1e-3);
    }

    #[test]
    fn decision_and_tie_rule() {
        let m = LinearSvmModel {
            weights: vec![1.0, -2.0],
            bias: 0.5,
            c: 1.0,
            class_encoding: CLASS_ENCODING.into(),
            solver_report: SolverReport {
                iterations: 0,
                max_projected_gradient_violation: 0.0,
                converged: true,
            },
        };
        let x = SparseVector::from_dense(&[1.0, 1.0]);
        assert_eq!(m.decision_value(&x).unwrap(), -0.5);
        assert_eq!(m.predict(&x).unwrap(), Left);
        assert_eq!(m.decision_value(&SparseVector::zeros(2)).unwrap(), 0.5);
        let tie = SparseVector::from_dense(&[0.5, 0.5]);
        assert_eq!(m.decision_value(&tie).unwrap(), 0.0);
        assert_eq!(m.predict(&tie).unwrap(), Left);
        assert_eq!(
            m.decision_value(&SparseVector::zeros(3)),
            Err(SvmError::DimensionMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn input_errors() {
        let x = dense(&[&[1.0], &[2.0]]);
        assert_eq!(
            train_svm(&x, &[Left, Left], &TrainConfig::default()).unwrap_err(),
            SvmError::SingleClass(Left)
        );
        assert_eq!(
            train_svm(&x[..1], &[Left], &TrainConfig::default()).unwrap_err(),
            SvmError::TooFewExamples(1)
        );
        let bad = dense(&[&[f64::NAN], &[2.0]]);
        assert_eq!(
            train_svm(&bad, &[Left, Right], &TrainConfig::default()).unwrap_err(),
            SvmError::NonFinite(0)
        );
        assert!(matches!(
            train_svm(&x, &[Left, Right], &TrainConfig::with_c(0.0)),
            Err(SvmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let x = dense(&[&[0.1, 1.0], &[0.3, 0.8], &[0.9, 0.2], &[0.7, 0.1], &[0.5, 0.5]]);
        let y = [Left, Left, Right, Right, Right];
        let cfg = TrainConfig {
            seed: 42,
            ..TrainConfig::with_c(5.0)
        };
        let a = train_svm(&x, &y, &cfg).unwrap();
        let b = train_svm(&x, &y, &cfg).unwrap();
        assert_eq!(a.solver_report.iterations, b.solver_report.iterations);
        assert_eq!(
            a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn class_exclusive_feature_sign() {
        // feature 0 only in right documents, feature 1 only in left ones
        let x = dense(&[
            &[1.0, 0.0, 0.5],
            &[1.0, 0.0, 0.2],
            &[0.0, 1.0, 0.4],
            &[0.0, 1.0, 0.3],
            &[0.0, 0.0, 0.9],
        ]);
        let y = [Right, Right, Left, Left, Left];
        let m = train_svm(&x, &y, &TrainConfig::with_c(1.0)).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.weights[1] < 0.0);
    }

    #[test]
    fn duality_gap_closes() {
        let x = dense(&[&[0.2, 1.0], &[0.4, 0.6], &[0.8, 0.3], &[0.6, 0.9], &[0.9, 0.1]]);
        let y = [Left, Left, Right, Left, Right];
        let (m, alpha) = solve_dual(&x, &y, &TrainConfig::with_c(2.0)).unwrap();
        let p = m.primal_objective(&x, &y);
        let d = dual_objective(&alpha, &x, &y);
        assert!(p - d >= -1e-9);
        assert!(p - d <= 1e-2 * (1.0 + p.abs()), "gap {}", p - d);
        assert!(alpha.iter().all(|&a| (0.0..=2.0).contains(&a)));
    }

    #[test]
    fn model_json_round_trip() {
        let x = dense(&[&[-1.0], &[1.0]]);
        let m = train_svm(&x, &[Left, Right], &TrainConfig::default()).unwrap();
        let back: LinearSvmModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
