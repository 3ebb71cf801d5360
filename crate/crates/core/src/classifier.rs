//! Multinomial logistic regression with L2 regularization over sparse
//! n-gram vectors.
//!
//! The objective is the mean negative log-likelihood of the softmax plus
//! `(lambda / 2) * ||W||_F^2`; the bias is not regularized. Training is
//! full-batch gradient descent from a zero start. Each iteration tries a
//! Barzilai-Borwein step and backtracks until the Armijo condition holds, so
//! the loss never increases across accepted steps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, SparseVector, Vocabulary};
use crate::util::{read_to_string, write_atomic};

pub const MODEL_FORMAT_VERSION: u32 = 1;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the relative loss change of an accepted step falls below this.
    pub tol: f64,
    /// Recorded for provenance. The optimizer itself is deterministic.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 0.1,
            max_iters: 500,
            tol: 1e-6,
            seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn with_lambda(lambda: f64) -> Self {
        Hyperparams {
            lambda,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Weight matrix (classes x dim, row-major) and bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    n_classes: usize,
    dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Weights {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Weights {
            n_classes,
            dim,
            w: vec![0.0; n_classes * dim],
            b: vec![0.0; n_classes],
        }
    }

    pub fn from_parts(n_classes: usize, dim: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.len() != n_classes * dim || b.len() != n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes * dim + n_classes,
                got: w.len() + b.len(),
            });
        }
        Ok(Weights { n_classes, dim, w, b })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.w[class * self.dim..(class + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.b[c] + x.dot(self.row(c)))
            .collect()
    }

    /// Softmax of `Wx + b`, computed with max subtraction.
    pub fn probabilities(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(softmax(&self.scores(x)))
    }

    fn axpy(&self, alpha: f64, dir: &Weights) -> Weights {
        Weights {
            n_classes: self.n_classes,
            dim: self.dim,
            w: self.w.iter().zip(&dir.w).map(|(a, d)| a + alpha * d).collect(),
            b: self.b.iter().zip(&dir.b).map(|(a, d)| a + alpha * d).collect(),
        }
    }

    fn dot(&self, other: &Weights) -> f64 {
        let w: f64 = self.w.iter().zip(&other.w).map(|(a, b)| a * b).sum();
        let b: f64 = self.b.iter().zip(&other.b).map(|(a, b)| a * b).sum();
        w + b
    }

    fn sub(&self, other: &Weights) -> Weights {
        self.axpy(-1.0, other)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Gradient with respect to `W`, row-major like [`Weights::weights`].
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
}

fn check_shapes(weights: &Weights, x: &[SparseVector], y: &[usize]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(y.len(), x.len()));
    }
    if let Some(bad) = x.iter().find(|v| v.dim() != weights.dim) {
        return Err(Error::DimensionMismatch {
            expected: weights.dim,
            got: bad.dim(),
        });
    }
    if let Some(&c) = y.iter().find(|&&c| c >= weights.n_classes) {
        return Err(Error::Config(format!(
            "class index {c} out of range for {} classes",
            weights.n_classes
        )));
    }
    Ok(())
}

fn loss_only(weights: &Weights, x: &[SparseVector], y: &[usize], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let s = weights.scores(xi);
            log_sum_exp(&s) - s[yi]
        })
        .sum();
    let reg: f64 = weights.w.iter().map(|v| v * v).sum();
    nll / n + 0.5 * lambda * reg
}

fn evaluate(weights: &Weights, x: &[SparseVector], y: &[usize], lambda: f64) -> (f64, Weights) {
    let n = x.len() as f64;
    let mut grad = Weights::zeros(weights.n_classes, weights.dim);
    let mut nll = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = weights.scores(xi);
        let lse = log_sum_exp(&s);
        nll += lse - s[yi];
        for (c, &sc) in s.iter().enumerate() {
            let p = (sc - lse).exp();
            let r = (p - if c == yi { 1.0 } else { 0.0 }) / n;
            grad.b[c] += r;
            let row = &mut grad.w[c * weights.dim..(c + 1) * weights.dim];
            for (j, v) in xi.iter() {
                row[j] += r * v;
            }
        }
    }
    let mut reg = 0.0;
    for (g, w) in grad.w.iter_mut().zip(&weights.w) {
        *g += lambda * w;
        reg += w * w;
    }
    (nll / n + 0.5 * lambda * reg, grad)
}

/// Regularized softmax loss and its exact gradient.
pub fn loss_and_gradient(weights: &Weights, x: &[SparseVector], y: &[usize], lambda: f64) -> Result<LossGradient> {
    check_shapes(weights, x, y)?;
    let (loss, grad) = evaluate(weights, x, y, lambda);
    Ok(LossGradient {
        loss,
        grad_w: grad.w,
        grad_b: grad.b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_train: usize,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub weights: Weights,
    pub metadata: TrainingMetadata,
    /// Loss at the start and after every accepted step.
    pub losses: Vec<f64>,
}

/// Fits weights for `n_classes` classes. With a single class no optimization
/// happens and the zero model (which always predicts that class) is returned.
pub fn train(x: &[SparseVector], y: &[usize], n_classes: usize, hyper: &Hyperparams) -> Result<Fit> {
    hyper.check()?;
    if n_classes == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let dim = x.first().map(SparseVector::dim).unwrap_or(0);
    let mut weights = Weights::zeros(n_classes, dim);
    check_shapes(&weights, x, y)?;

    if n_classes == 1 {
        let loss = loss_only(&weights, x, y, hyper.lambda);
        return Ok(Fit {
            weights,
            metadata: TrainingMetadata {
                n_train: x.len(),
                final_loss: loss,
                iterations: 0,
                converged: true,
            },
            losses: vec![loss],
        });
    }

    let (mut loss, mut grad) = evaluate(&weights, x, y, hyper.lambda);
    let mut losses = vec![loss];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < hyper.max_iters {
        let gnorm2 = grad.dot(&grad);
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        let mut alpha = step;
        let accepted = loop {
            let trial = weights.axpy(-alpha, &grad);
            let trial_loss = loss_only(&trial, x, y, hyper.lambda);
            if trial_loss <= loss - ARMIJO_C * alpha * gnorm2 {
                break Some((trial, trial_loss));
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                break None;
            }
        };
        let Some((next, next_loss)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let (_, next_grad) = evaluate(&next, x, y, hyper.lambda);

        let s = next.sub(&weights);
        let yv = next_grad.sub(&grad);
        let sy = s.dot(&yv);
        step = if sy > 0.0 { s.dot(&s) / sy } else { alpha * 2.0 };

        let rel = (loss - next_loss).abs() / loss.abs().max(f64::MIN_POSITIVE);
        weights = next;
        grad = next_grad;
        loss = next_loss;
        losses.push(loss);
        if rel < hyper.tol {
            converged = true;
            break;
        }
    }

    Ok(Fit {
        weights,
        metadata: TrainingMetadata {
            n_train: x.len(),
            final_loss: loss,
            iterations,
            converged,
        },
        losses,
    })
}

/// A fitted per-attribute classifier bundled with its feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub attribute: String,
    pub classes: Vec<String>,
    pub weights: Weights,
    pub vocabulary: Vocabulary,
    pub hyperparams: Hyperparams,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    /// Builds the vocabulary from `texts`, restricts `class_order` to the labels
    /// that occur, and trains. Labels outside `class_order` are an error.
    pub fn fit(
        attribute: &str,
        texts: &[&str],
        labels: &[&str],
        class_order: &[String],
        features: &FeatureConfig,
        hyper: &Hyperparams,
    ) -> Result<TrainedModel> {
        if texts.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if texts.len() != labels.len() {
            return Err(Error::LengthMismatch(labels.len(), texts.len()));
        }
        if let Some(bad) = labels.iter().find(|l| !class_order.iter().any(|c| c == *l)) {
            return Err(Error::Rejected(format!("label {bad:?} not a class of {attribute}")));
        }
        let classes: Vec<String> = class_order
            .iter()
            .filter(|c| labels.iter().any(|l| l == c))
            .cloned()
            .collect();
        let y: Vec<usize> = labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).unwrap())
            .collect();
        let vocabulary = Vocabulary::build(texts.iter().copied(), features)?;
        let x: Vec<SparseVector> = texts.iter().map(|t| vocabulary.vectorize(t)).collect();
        let fit = train(&x, &y, classes.len(), hyper)?;
        Ok(TrainedModel {
            attribute: attribute.to_string(),
            classes,
            weights: fit.weights,
            vocabulary,
            hyperparams: hyper.clone(),
            metadata: fit.metadata,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.weights.probabilities(x)
    }

    /// Most probable class; exact ties go to the earlier class.
    pub fn predict(&self, x: &SparseVector) -> Result<(String, f64)> {
        let probs = self.predict_proba(x)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[best] {
                best = i;
            }
        }
        Ok((self.classes[best].clone(), probs[best]))
    }

    pub fn predict_text(&self, text: &str) -> (String, f64) {
        let x = self.vocabulary.vectorize(text);
        self.predict(&x).expect("vectorized with the model's own vocabulary")
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    attribute: String,
    classes: Vec<String>,
    vocab: BTreeMap<String, u32>,
    #[serde(default)]
    document_frequencies: Vec<u32>,
    feature_config: FeatureConfig,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    hyperparams: Hyperparams,
    metadata: TrainingMetadata,
}

impl From<&TrainedModel> for ModelFile {
    fn from(m: &TrainedModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            attribute: m.attribute.clone(),
            classes: m.classes.clone(),
            vocab: m
                .vocabulary
                .terms()
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect(),
            document_frequencies: m.vocabulary.document_frequencies().to_vec(),
            feature_config: m.vocabulary.config().clone(),
            weights: (0..m.weights.n_classes())
                .map(|c| m.weights.row(c).to_vec())
                .collect(),
            bias: m.weights.bias().to_vec(),
            hyperparams: m.hyperparams.clone(),
            metadata: m.metadata.clone(),
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                f.format_version
            )));
        }
        let dim = f.vocab.len();
        let mut terms = vec![None; dim];
        for (term, idx) in f.vocab {
            let slot = terms
                .get_mut(idx as usize)
                .ok_or_else(|| Error::ModelFormat(format!("vocabulary index {idx} out of range")))?;
            if slot.replace(term).is_some() {
                return Err(Error::ModelFormat(format!("vocabulary index {idx} repeated")));
            }
        }
        let terms: Vec<String> = terms.into_iter().map(Option::unwrap).collect();
        let df = if f.document_frequencies.is_empty() {
            vec![0; dim]
        } else {
            f.document_frequencies
        };
        let vocabulary = Vocabulary::from_terms(terms, df, f.feature_config)?;
        if f.classes.is_empty() || f.weights.len() != f.classes.len() || f.bias.len() != f.classes.len() {
            return Err(Error::ModelFormat("class list, weight rows and bias disagree".into()));
        }
        if f.weights.iter().any(|row| row.len() != dim) {
            return Err(Error::ModelFormat("weight row length differs from vocabulary size".into()));
        }
        let n_classes = f.classes.len();
        let weights = Weights::from_parts(n_classes, dim, f.weights.concat(), f.bias)?;
        Ok(TrainedModel {
            attribute: f.attribute,
            classes: f.classes,
            weights,
            vocabulary,
            hyperparams: f.hyperparams,
            metadata: f.metadata,
        })
    }
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelFile::from(model))?)
}

pub fn model_from_json(json: &str) -> Result<TrainedModel> {
    let file: ModelFile = serde_json::from_str(json).map_err(|e| Error::ModelFormat(e.to_string()))?;
    TrainedModel::try_from(file)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut json = model_to_json(model)?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    model_from_json(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Weighting;

    fn sv(dim: usize, e: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(dim, e.to_vec()).unwrap()
    }

    #[test]
    fn zero_model_loss_is_ln2() {
        let w = Weights::zeros(2, 3);
        let lg = loss_and_gradient(&w, &[sv(3, &[(1, 2.0)])], &[0], 0.7).unwrap();
        assert!((lg.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_have_no_regularization_contribution() {
        let x = [sv(2, &[(0, 1.0)]), sv(2, &[(1, 3.0)])];
        let y = [0, 1];
        let w = Weights::zeros(2, 2);
        let a = loss_and_gradient(&w, &x, &y, 0.0).unwrap();
        let b = loss_and_gradient(&w, &x, &y, 123.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let w = Weights::zeros(2, 2);
        assert!(matches!(
            loss_and_gradient(&w, &[], &[], 0.1),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn zero_model_is_uniform() {
        let w = Weights::zeros(4, 3);
        let p = w.probabilities(&sv(3, &[(0, 1.0), (2, 5.0)])).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn argmax_ties_go_to_first_class() {
        let cfg = FeatureConfig {
            n_max: 1,
            min_df: 1,
            ..FeatureConfig::default()
        };
        let vocabulary = Vocabulary::build(["a b"], &cfg).unwrap();
        let model = TrainedModel {
            attribute: "Against/For".into(),
            classes: vec!["Against".into(), "For".into()],
            weights: Weights::zeros(2, vocabulary.len()),
            vocabulary,
            hyperparams: Hyperparams::default(),
            metadata: TrainingMetadata {
                n_train: 0,
                final_loss: 0.0,
                iterations: 0,
                converged: true,
            },
        };
        assert_eq!(model.predict_text("a"), ("Against".to_string(), 0.5));
    }

    #[test]
    fn single_class_is_degenerate() {
        let cfg = FeatureConfig {
            n_max: 1,
            min_df: 1,
            weighting: Weighting::Count,
            ..FeatureConfig::default()
        };
        let classes = vec!["Against".to_string(), "For".to_string()];
        let m = TrainedModel::fit(
            "Against/For",
            &["free college", "college now"],
            &["For", "For"],
            &classes,
            &cfg,
            &Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(m.classes, vec!["For"]);
        assert_eq!(m.metadata.iterations, 0);
        assert_eq!(m.predict_text("anything at all"), ("For".to_string(), 1.0));
        assert_eq!(m.predict_text("free"), ("For".to_string(), 1.0));
    }

    #[test]
    fn labels_outside_class_order_are_rejected() {
        let classes = vec!["A".to_string()];
        let r = TrainedModel::fit(
            "x",
            &["a a"],
            &["B"],
            &classes,
            &FeatureConfig::default(),
            &Hyperparams::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::with_lambda(-1.0).check().is_err());
        assert!(Hyperparams {
            tol: 0.0,
            ..Hyperparams::default()
        }
        .check()
        .is_err());
    }

    #[test]
    fn wrong_dimension_rejected() {
        let w = Weights::zeros(2, 3);
        assert!(matches!(
            w.probabilities(&sv(4, &[])),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }
}
