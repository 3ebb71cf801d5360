//! Stratified k-fold cross-validation over a lambda grid, micro-F1 scoring,
//! final-model fitting and bulk annotation of unlabeled corpora.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, Hyperparams, TrainedModel};
use crate::corpus::{Corpus, LabelSource, PredictedLabel};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, SparseVector, Vocabulary};

/// Regularization strengths searched by default.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub grid: Vec<Hyperparams>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            seed: 42,
            grid: DEFAULT_LAMBDA_GRID
                .iter()
                .map(|&l| Hyperparams::with_lambda(l))
                .collect(),
        }
    }
}

impl CvConfig {
    pub fn with_lambdas(k: usize, seed: u64, lambdas: &[f64]) -> Self {
        CvConfig {
            k,
            seed,
            grid: lambdas
                .iter()
                .map(|&lambda| Hyperparams {
                    lambda,
                    seed,
                    ..Hyperparams::default()
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPointScore {
    pub hyperparams: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Cross-validation outcome for one attribute. `overall` is filled in by
/// [`finalize`]: the in-sample score of the model refit on every labeled record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attribute: String,
    pub n_records: usize,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub overall: Option<f64>,
    pub chosen: Hyperparams,
    pub grid: Vec<GridPointScore>,
}

impl EvalReport {
    /// `"0.84 (0.02)"`.
    pub fn mean_std(&self) -> String {
        format!("{:.2} ({:.2})", self.mean, self.std)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Splits `0..y.len()` into `k` folds preserving class proportions. Members of
/// each class are shuffled with the seed and dealt round-robin, the dealing
/// position carried across classes so fold sizes also differ by at most one.
pub fn stratified_kfold<S: AsRef<str>>(y: &[S], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > y.len() {
        return Err(Error::Config(format!("k = {k} exceeds {} items", y.len())));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in y.iter().enumerate() {
        by_class.entry(label.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Micro-averaged F1 from class-summed TP, FP and FN, evaluated as
/// `2TP / (2TP + FP + FN)`.
pub fn micro_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let classes: HashSet<&str> = gold
        .iter()
        .map(AsRef::as_ref)
        .chain(pred.iter().map(AsRef::as_ref))
        .collect();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for c in classes {
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.as_ref() == c, p.as_ref() == c);
            match (g, p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    })
}

/// Texts and gold labels of the records labeled for `attribute`.
pub fn labeled_examples<'a>(corpus: &'a Corpus, attribute: &str) -> Result<(Vec<&'a str>, Vec<&'a str>)> {
    corpus.schemas.require(attribute)?;
    Ok(corpus
        .records
        .iter()
        .filter_map(|r| {
            corpus
                .label(r, attribute, LabelSource::Gold)
                .map(|l| (r.text.as_str(), l))
        })
        .unzip())
}

/// One train/test split with features built from the training side only.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub vocabulary: Vocabulary,
    pub classes: Vec<String>,
    x_train: Vec<SparseVector>,
    y_train: Vec<usize>,
    x_test: Vec<SparseVector>,
}

/// Builds the `k` folds for `attribute`: split indices refer to the labeled
/// examples in corpus order.
pub fn prepare_folds(corpus: &Corpus, attribute: &str, cv: &CvConfig, features: &FeatureConfig) -> Result<Vec<FoldData>> {
    let (texts, labels) = labeled_examples(corpus, attribute)?;
    if texts.len() < cv.k.max(2) {
        return Err(Error::NotEnoughRecords {
            attribute: attribute.to_string(),
            have: texts.len(),
            need: cv.k.max(2),
        });
    }
    let class_order = &corpus.schemas.require(attribute)?.values;
    let folds = stratified_kfold(&labels, cv.k, cv.seed)?;

    folds
        .par_iter()
        .map(|test_idx| {
            let in_test: HashSet<usize> = test_idx.iter().copied().collect();
            let train_idx: Vec<usize> = (0..texts.len()).filter(|i| !in_test.contains(i)).collect();
            let vocabulary = Vocabulary::build(train_idx.iter().map(|&i| texts[i]), features)?;
            let classes: Vec<String> = class_order
                .iter()
                .filter(|c| train_idx.iter().any(|&i| labels[i] == c.as_str()))
                .cloned()
                .collect();
            let x_train = train_idx.iter().map(|&i| vocabulary.vectorize(texts[i])).collect();
            let y_train = train_idx
                .iter()
                .map(|&i| classes.iter().position(|c| c == labels[i]).unwrap())
                .collect();
            let x_test = test_idx.iter().map(|&i| vocabulary.vectorize(texts[i])).collect();
            Ok(FoldData {
                train_idx,
                test_idx: test_idx.clone(),
                vocabulary,
                classes,
                x_train,
                y_train,
                x_test,
            })
        })
        .collect()
}

fn score_fold(fold: &FoldData, labels: &[&str], hyper: &Hyperparams) -> Result<f64> {
    let fit = classifier::train(&fold.x_train, &fold.y_train, fold.classes.len(), hyper)?;
    let mut predicted = Vec::with_capacity(fold.x_test.len());
    for x in &fold.x_test {
        let probs = fit.weights.probabilities(x)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[best] {
                best = i;
            }
        }
        predicted.push(fold.classes[best].as_str());
    }
    let gold: Vec<&str> = fold.test_idx.iter().map(|&i| labels[i]).collect();
    micro_f1(&gold, &predicted)
}

/// Scores every grid point over the same folds and picks the highest mean
/// micro-F1, ties going to the smaller lambda.
pub fn cross_validate(corpus: &Corpus, attribute: &str, cv: &CvConfig, features: &FeatureConfig) -> Result<EvalReport> {
    if cv.grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    for h in &cv.grid {
        h.check()?;
    }
    let (_, labels) = labeled_examples(corpus, attribute)?;
    let folds = prepare_folds(corpus, attribute, cv, features)?;

    let jobs: Vec<(usize, usize)> = (0..cv.grid.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| score_fold(&folds[f], &labels, &cv.grid[g]))
        .collect::<Result<_>>()?;

    let mut grid: Vec<GridPointScore> = cv
        .grid
        .iter()
        .enumerate()
        .map(|(g, h)| {
            let fold_scores = scores[g * folds.len()..(g + 1) * folds.len()].to_vec();
            let (mean, std) = mean_std(&fold_scores);
            GridPointScore {
                hyperparams: h.clone(),
                fold_scores,
                mean,
                std,
            }
        })
        .collect();
    grid.sort_by(|a, b| a.hyperparams.lambda.total_cmp(&b.hyperparams.lambda));

    let mut best = 0;
    for (i, point) in grid.iter().enumerate().skip(1) {
        if point.mean > grid[best].mean {
            best = i;
        }
    }
    let winner = grid[best].clone();
    Ok(EvalReport {
        attribute: attribute.to_string(),
        n_records: labels.len(),
        fold_scores: winner.fold_scores,
        mean: winner.mean,
        std: winner.std,
        overall: None,
        chosen: winner.hyperparams,
        grid,
    })
}

/// Refits on every labeled record and reports the in-sample micro-F1.
pub fn finalize(
    corpus: &Corpus,
    attribute: &str,
    hyper: &Hyperparams,
    features: &FeatureConfig,
) -> Result<(TrainedModel, f64)> {
    let (texts, labels) = labeled_examples(corpus, attribute)?;
    if texts.is_empty() {
        return Err(Error::NotEnoughRecords {
            attribute: attribute.to_string(),
            have: 0,
            need: 1,
        });
    }
    let class_order = &corpus.schemas.require(attribute)?.values;
    let model = TrainedModel::fit(attribute, &texts, &labels, class_order, features, hyper)?;
    let predicted: Vec<String> = texts.iter().map(|t| model.predict_text(t).0).collect();
    let overall = micro_f1(&labels, &predicted)?;
    Ok((model, overall))
}

/// Cross-validates, refits with the chosen hyperparameters and returns the
/// final model with a complete report.
pub fn train_attribute(
    corpus: &Corpus,
    attribute: &str,
    cv: &CvConfig,
    features: &FeatureConfig,
) -> Result<(TrainedModel, EvalReport)> {
    let mut report = cross_validate(corpus, attribute, cv, features)?;
    let (model, overall) = finalize(corpus, attribute, &report.chosen, features)?;
    report.overall = Some(overall);
    Ok((model, report))
}

/// Fills `predicted_labels` for every record from every model. Gold labels are
/// left alone.
pub fn annotate_corpus<'m>(models: impl IntoIterator<Item = &'m TrainedModel>, corpus: &Corpus) -> Corpus {
    let models: Vec<&TrainedModel> = models.into_iter().collect();
    let records = corpus
        .records
        .par_iter()
        .map(|r| {
            let mut r = r.clone();
            for m in &models {
                let (value, prob) = m.predict_text(&r.text);
                r.predicted_labels
                    .insert(m.attribute.clone(), PredictedLabel { value, prob });
            }
            r
        })
        .collect();
    corpus.derive(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leave_one_out_folds() {
        let y: Vec<String> = (0..10).map(|i| format!("c{}", i % 3)).collect();
        let folds = stratified_kfold(&y, 10, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn six_four_split_into_five() {
        let y: Vec<&str> = [["A"; 6].as_slice(), ["B"; 4].as_slice()].concat();
        let folds = stratified_kfold(&y, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut a: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == "A").count()).collect();
        let mut b: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == "B").count()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, [1, 1, 1, 1, 2]);
        assert_eq!(b, [0, 1, 1, 1, 1]);
    }

    #[test]
    fn k_larger_than_n_is_an_error() {
        assert!(stratified_kfold(&["a", "b"], 3, 0).is_err());
        assert!(stratified_kfold(&["a", "b"], 1, 0).is_err());
    }

    #[test]
    fn micro_f1_examples() {
        assert_eq!(micro_f1(&["A", "B"], &["A", "B"]).unwrap(), 1.0);
        assert_eq!(micro_f1(&["A", "A", "B", "C"], &["A", "B", "B", "B"]).unwrap(), 0.5);
        assert!(micro_f1(&["A"], &["A", "B"]).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn mean_std_string_matches_table_layout() {
        let r = EvalReport {
            attribute: "Against/For".into(),
            n_records: 10,
            fold_scores: vec![0.84; 5],
            mean: 0.8412,
            std: 0.0213,
            overall: Some(0.95),
            chosen: Hyperparams::default(),
            grid: vec![],
        };
        assert_eq!(r.mean_std(), "0.84 (0.02)");
        let age = EvalReport {
            mean: 0.4,
            std: 0.0,
            ..r
        };
        assert_eq!(age.mean_std(), "0.40 (0.00)");
    }
}
