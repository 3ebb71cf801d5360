//! Acceptance gate. Prints one PASS/FAIL/SKIP line per primary criterion and
//! exits nonzero if any criterion fails.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the table-shape golden files, and
//! `ENRICH_SAMPLED_DATASET=<corpus>` to run the reproduction check against the
//! released human-annotated sample.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use enrich_core::analysis::{cross_tab, label_counts, table_from_json, AttributeRef, Cell, ReportTable};
use enrich_core::annotation::{cohens_kappa, percent_agreement};
use enrich_core::classifier::{loss_and_gradient, train, Hyperparams, Weights};
use enrich_core::config::PipelineConfig;
use enrich_core::corpus::{AttributeKind, AttributeSchema, Corpus, CorpusRecord, LabelSource, SchemaSet};
use enrich_core::enrichment::{gender_from_counts, infer_gender, Gender, NameCounts, NameGenderDb};
use enrich_core::evaluation::{micro_f1, train_attribute, CvConfig};
use enrich_core::features::{FeatureConfig, SparseVector};
use enrich_core::pipeline::{load, run_pipeline, save};
use enrich_core::synthetic::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Verdict>);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

// ---------------------------------------------------------------- gradient

fn random_sparse(rng: &mut ChaCha8Rng, dim: usize) -> SparseVector {
    let mut entries = Vec::new();
    for j in 0..dim {
        if rng.random_bool(0.6) {
            entries.push((j as u32, rng.random_range(0.1..3.0)));
        }
    }
    SparseVector::new(dim, entries).unwrap()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.random_range(2..=3);
        let d = rng.random_range(1..=10);
        let n = rng.random_range(1..=16);
        let lambda = [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4)];
        let x: Vec<SparseVector> = (0..n).map(|_| random_sparse(&mut rng, d)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let w: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights = Weights::from_parts(k, d, w, b).map_err(err)?;
        let analytic = loss_and_gradient(&weights, &x, &y, lambda).map_err(err)?;
        let loss_at = |wt: &Weights| loss_and_gradient(wt, &x, &y, lambda).unwrap().loss;

        let mut numeric_w = Vec::with_capacity(k * d);
        for i in 0..k * d {
            let mut plus = weights.clone();
            plus.weights_mut()[i] += h;
            let mut minus = weights.clone();
            minus.weights_mut()[i] -= h;
            numeric_w.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
        }
        let mut numeric_b = Vec::with_capacity(k);
        for c in 0..k {
            let mut plus = weights.clone();
            plus.bias_mut()[c] += h;
            let mut minus = weights.clone();
            minus.bias_mut()[c] -= h;
            numeric_b.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
        }
        let mut a = analytic.grad_w.clone();
        a.extend(&analytic.grad_b);
        numeric_w.extend(numeric_b);
        worst = worst.max(relative_error(&a, &numeric_w));
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-5, || format!("max relative error {worst:.3e} >= 1e-5"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("20 instances, max relative error {worst:.2e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- micro-F1

fn micro_f1_is_accuracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let classes = ["a", "b", "c", "d", "e", "f"];
    for case in 0..100 {
        let k = rng.random_range(2..=classes.len());
        let n = rng.random_range(1..=60);
        let gold: Vec<&str> = (0..n).map(|_| classes[rng.random_range(0..k)]).collect();
        let pred: Vec<&str> = (0..n).map(|_| classes[rng.random_range(0..k)]).collect();
        let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        let accuracy = correct as f64 / n as f64;
        let f1 = micro_f1(&gold, &pred).map_err(err)?;
        ensure(f1 == accuracy, || format!("case {case}: micro-F1 {f1} != accuracy {accuracy}"))?;
    }
    Ok("100 random prediction sets, exact equality".into())
}

// ---------------------------------------------------------------- kappa

/// Cohen's kappa from an explicit contingency table.
fn kappa_oracle(a: &[&str], b: &[&str]) -> f64 {
    let mut cats: Vec<&str> = a.iter().chain(b).copied().collect();
    cats.sort();
    cats.dedup();
    let idx = |s: &str| cats.iter().position(|c| *c == s).unwrap();
    let m = cats.len();
    let mut table = vec![vec![0.0f64; m]; m];
    for (x, y) in a.iter().zip(b) {
        table[idx(x)][idx(y)] += 1.0;
    }
    let n = a.len() as f64;
    let po: f64 = (0..m).map(|i| table[i][i]).sum::<f64>() / n;
    let pe: f64 = (0..m)
        .map(|i| {
            let row: f64 = table[i].iter().sum();
            let col: f64 = table.iter().map(|r| r[i]).sum();
            (row / n) * (col / n)
        })
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

fn kappa_fixtures() -> Outcome {
    let a1 = ["C", "C", "C", "C", "C", "C", "U", "U", "U", "U"];
    let a2 = ["C", "C", "C", "C", "C", "U", "C", "U", "U", "U"];
    let pairs: Vec<(&str, &str)> = a1.iter().copied().zip(a2.iter().copied()).collect();
    let kappa = cohens_kappa(&pairs).ok_or("no kappa")?;
    let po = percent_agreement(&pairs).ok_or("no agreement")?;
    ensure((kappa - 0.28 / 0.48).abs() <= 1e-9, || format!("fixture kappa {kappa}"))?;
    ensure(po == 0.8, || format!("fixture percent agreement {po}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cats = ["x", "y", "z", "w"];
    for case in 0..50 {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=cats.len());
        let a: Vec<&str> = (0..n).map(|_| cats[rng.random_range(0..m)]).collect();
        let b: Vec<&str> = (0..n).map(|_| cats[rng.random_range(0..m)]).collect();
        let pairs: Vec<(&str, &str)> = a.iter().copied().zip(b.iter().copied()).collect();
        let got = cohens_kappa(&pairs).ok_or("no kappa")?;
        let want = kappa_oracle(&a, &b);
        ensure((got - want).abs() <= 1e-9, || format!("random fixture {case}: {got} vs oracle {want}"))?;
    }
    Ok(format!("fixture kappa {kappa:.6}, agreement {po}; 50 random fixtures match the oracle"))
}

// ---------------------------------------------------------------- separable corpus

const WORDS_A: [&str; 8] = ["free", "tuition", "grant", "scholarship", "aid", "public", "access", "opportunity"];
const WORDS_B: [&str; 8] = ["cost", "taxes", "debt", "burden", "spending", "deficit", "waste", "budget"];

fn separable_corpus() -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let schema = SchemaSet::new(vec![AttributeSchema::new("Topic", ["A", "B"], AttributeKind::Conversational).unwrap()])
        .unwrap();
    let records = (0..200)
        .map(|i| {
            let (label, words) = if i % 2 == 0 { ("A", &WORDS_A) } else { ("B", &WORDS_B) };
            let len = rng.random_range(4..=8);
            let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
            CorpusRecord::new(format!("d{i:03}"), text.join(" ")).with_gold("Topic", label)
        })
        .collect();
    Corpus::new(records, schema)
}

fn separable_cv_and_pipeline() -> Outcome {
    let corpus = separable_corpus();
    let (_, report) =
        train_attribute(&corpus, "Topic", &CvConfig::default(), &FeatureConfig::default()).map_err(err)?;
    let overall = report.overall.unwrap_or(f64::NAN);
    ensure(report.fold_scores.len() == 5, || format!("{} folds", report.fold_scores.len()))?;
    ensure(report.mean >= 0.95, || format!("mean micro-F1 {:.4} < 0.95", report.mean))?;
    ensure(overall == 1.0, || format!("overall {overall} != 1.0"))?;

    let dir = tempfile::tempdir().map_err(err)?;
    save(&corpus, &dir.path().join("sampled.jsonl")).map_err(err)?;
    let unlabeled = corpus.derive(
        corpus
            .records
            .iter()
            .map(|r| CorpusRecord::new(r.id.clone(), r.text.clone()))
            .collect(),
    );
    save(&unlabeled, &dir.path().join("full.jsonl")).map_err(err)?;
    let config = serde_json::json!({
        "paths": {"raw_corpus": "full.jsonl", "sampled_corpus": "sampled.jsonl"},
        "analysis": {"rows": ["enriched.gender"], "cols": ["Topic"]},
    });
    std::fs::write(dir.path().join("config.json"), config.to_string()).map_err(err)?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_enrich-corpus"))
        .arg("--config")
        .arg(dir.path().join("config.json"))
        .arg("pipeline")
        .output()
        .map_err(err)?;
    let elapsed = start.elapsed();
    ensure(out.status.success(), || {
        format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    ensure(elapsed < Duration::from_secs(30), || format!("pipeline took {elapsed:?}"))?;
    ensure(dir.path().join("out/distribution.csv").exists(), || "no distribution table".into())?;
    Ok(format!(
        "mean {:.4} ({:.4}), overall {overall:.2}, pipeline {elapsed:.2?}",
        report.mean, report.std
    ))
}

// ---------------------------------------------------------------- gender

fn gender_rule() -> Outcome {
    let mut db = NameGenderDb::new();
    db.add("Mary", 7065, 30);
    db.add("Taylor", 4800, 5200);
    let got = [
        infer_gender("Mary Smith", &db, 0.95),
        infer_gender("Taylor Jones", &db, 0.95),
        infer_gender("Zyxw Nobody", &db, 0.95),
    ];
    let want = [Gender::Female, Gender::Unknown, Gender::Unknown];
    ensure(got == want, || format!("toy examples gave {got:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for draw in 0..1000 {
        let counts = NameCounts {
            female: rng.random_range(0..10_000),
            male: rng.random_range(0..10_000),
        };
        if counts.female + counts.male == 0 {
            continue;
        }
        let t1 = rng.random_range(0.5f64..=1.0).max(0.5000001);
        let t2 = rng.random_range(t1..=1.0);
        let (g1, g2) = (gender_from_counts(counts, t1), gender_from_counts(counts, t2));
        ensure(g2 == Gender::Unknown || g1 == g2, || {
            format!("draw {draw}: {counts:?} gives {g1:?} at {t1} but {g2:?} at {t2}")
        })?;
    }
    Ok("Female / Unknown / Unknown; 1000 monotonicity draws hold".into())
}

// ---------------------------------------------------------------- regularization

fn regularization_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (d, n, k) = (8, 40, 3);
    let x: Vec<SparseVector> = (0..n).map(|_| random_sparse(&mut rng, d)).collect();
    let y: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut norms = Vec::new();
    for lambda in [0.01, 0.1, 1.0, 10.0] {
        let hyper = Hyperparams {
            lambda,
            max_iters: 20_000,
            tol: 1e-14,
            ..Hyperparams::default()
        };
        let fit = train(&x, &y, k, &hyper).map_err(err)?;
        norms.push(fit.weights.frobenius_norm());
    }
    for w in norms.windows(2) {
        ensure(w[1] <= w[0] + 1e-9, || format!("norms not non-increasing: {norms:?}"))?;
    }
    Ok(format!(
        "||W||_F = {}",
        norms.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
    ))
}

// ---------------------------------------------------------------- table shapes

/// Layout of a table with the values abstracted away: labels verbatim, counts
/// as `#`, proportions as `0.00`, and `"0.84 (0.02)"` scores as `d.dd (d.dd)`.
fn shape(table: &ReportTable) -> String {
    let mut out = format!("{}\n{}\n", table.title, table.header.join(" | "));
    for row in &table.rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Text(s) if s.starts_with(|ch: char| ch.is_ascii_digit()) && s.contains(" (") => {
                    s.chars().map(|ch| if ch.is_ascii_digit() { 'd' } else { ch }).collect()
                }
                Cell::Text(s) => s.clone(),
                Cell::Count(_) => "#".into(),
                Cell::Proportion(_) => "0.00".into(),
                Cell::Empty => String::new(),
            })
            .collect();
        out.push_str(&cells.join(" | "));
        out.push('\n');
    }
    out
}

fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = manifest_dir().join("tests/golden").join(format!("{name}.shape"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(err)?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(expected == actual, || format!("{name} layout differs from {}", path.display()))
}

fn table_shapes() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let written = generate(&SynthConfig::default()).map_err(err)?.write(dir.path()).map_err(err)?;
    let cfg = PipelineConfig::load(&written.config).map_err(err)?;
    run_pipeline(&cfg).map_err(err)?;
    let out = &cfg.paths.output_dir;
    let read = |stem: &str| -> Result<ReportTable, String> {
        let text = std::fs::read_to_string(out.join(format!("{stem}.json"))).map_err(err)?;
        table_from_json(&text).map_err(err)
    };

    let counts = read("label_counts")?;
    ensure(counts.header == ["Attribute", "Value", "sampled", "corpus"], || {
        format!("label count header {:?}", counts.header)
    })?;
    let eval = read("eval")?;
    ensure(eval.header == ["", "overall", "mean (std. dev.)"], || format!("eval header {:?}", eval.header))?;
    ensure(eval.rows.len() == 10, || format!("{} eval rows", eval.rows.len()))?;
    let enrichment = read("enrichment")?;
    ensure(enrichment.rows.len() == 14 + 3, || format!("{} enrichment rows", enrichment.rows.len()))?;
    let dist = read("distribution")?;
    ensure(dist.rows.len() == 14 + 3, || format!("{} distribution rows", dist.rows.len()))?;
    for row in &dist.rows {
        ensure(row.len() == dist.header.len(), || "ragged distribution row".into())?;
    }

    for (name, table) in [
        ("label_counts", &counts),
        ("eval", &eval),
        ("enrichment", &enrichment),
        ("distribution", &dist),
    ] {
        check_golden(name, &shape(table))?;
    }
    Ok("label counts, evaluation, enrichment and distribution layouts match golden files".into())
}

// ---------------------------------------------------------------- reproduction

fn reproduction() -> Verdict {
    let Some(path) = std::env::var_os("ENRICH_SAMPLED_DATASET") else {
        return Verdict::Skip("ENRICH_SAMPLED_DATASET not set".into());
    };
    let run = || -> Outcome {
        let corpus = load(Path::new(&path)).map_err(err)?;
        let mut parts = Vec::new();
        for (attr, target) in [("Against/For", 0.95), ("Civil/Uncivil", 0.82)] {
            let (_, report) =
                train_attribute(&corpus, attr, &CvConfig::default(), &FeatureConfig::default()).map_err(err)?;
            let overall = report.overall.unwrap_or(f64::NAN);
            ensure((overall - target).abs() <= 0.05, || {
                format!("{attr} overall {overall:.3} outside {target} +/- 0.05")
            })?;
            parts.push(format!("{attr} overall {overall:.3} mean {}", report.mean_std()));
        }
        Ok(parts.join("; "))
    };
    match run() {
        Ok(m) => Verdict::Pass(m),
        Err(m) => Verdict::Fail(m),
    }
}

// ---------------------------------------------------------------- marginals

fn read_counts() -> Result<BTreeMap<String, Vec<(String, u64)>>, String> {
    let path = manifest_dir().join("tests/fixtures/full_dataset_label_counts.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(err)?;
    let mut out: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(err)?;
        let count: u64 = row[2].parse().map_err(err)?;
        out.entry(row[0].to_string()).or_default().push((row[1].to_string(), count));
    }
    Ok(out)
}

fn marginal_arithmetic() -> Outcome {
    let counts = read_counts()?;
    let n: u64 = counts["Against/For"].iter().map(|(_, c)| c).sum();
    let expand = |attr: &str| -> Result<Vec<String>, String> {
        let values: Vec<String> = counts[attr]
            .iter()
            .flat_map(|(v, c)| std::iter::repeat_n(v.clone(), *c as usize))
            .collect();
        ensure(values.len() as u64 == n, || format!("{attr} sums to {} not {n}", values.len()))?;
        Ok(values)
    };
    let stance = expand("Against/For")?;
    let gender = expand("Gender")?;
    let source = expand("Source")?;
    let records = (0..n as usize)
        .map(|i| {
            CorpusRecord::new(format!("r{i}"), "")
                .with_source(source[i].clone())
                .with_predicted("Against/For", stance[i].clone(), 1.0)
                .with_predicted("Gender", gender[i].clone(), 1.0)
        })
        .collect();
    let corpus = Corpus::new(records, SchemaSet::default());

    let stance_ref = AttributeRef::Label("Against/For".into());
    let ingested = &label_counts(&corpus, std::slice::from_ref(&stance_ref), LabelSource::Predicted).map_err(err)?[0];
    for (v, c) in &counts["Against/For"] {
        ensure(ingested.get(v) == *c, || format!("{v}: ingested {} vs {c}", ingested.get(v)))?;
    }
    let mut fractions = Vec::new();
    for row in ["Gender", "Source"] {
        let tab = cross_tab(&corpus, &AttributeRef::Label(row.into()), &stance_ref, LabelSource::Predicted)
            .map_err(err)?;
        let totals = tab.col_totals();
        let against = tab.col_labels.iter().position(|c| c == "Against").ok_or("no Against column")?;
        let fraction = totals[against] as f64 / tab.total() as f64;
        ensure((fraction - 0.681).abs() <= 0.001, || format!("via {row}: Against fraction {fraction:.4}"))?;
        fractions.push(fraction);
    }
    Ok(format!("Against fraction {:.4} ({} / {n})", fractions[0], counts["Against/For"][0].1))
}

// ---------------------------------------------------------------- driver

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(|| gradient_check().into_verdict())),
        ("micro-F1 equals accuracy", Box::new(|| micro_f1_is_accuracy().into_verdict())),
        ("Cohen's kappa oracle", Box::new(|| kappa_fixtures().into_verdict())),
        ("separable-corpus CV and pipeline runtime", Box::new(|| separable_cv_and_pipeline().into_verdict())),
        ("gender rule", Box::new(|| gender_rule().into_verdict())),
        ("regularization monotonicity", Box::new(|| regularization_monotone().into_verdict())),
        ("table-shape reproduction", Box::new(|| table_shapes().into_verdict())),
        ("published-score reproduction (conditional)", Box::new(reproduction)),
        ("marginal arithmetic", Box::new(|| marginal_arithmetic().into_verdict())),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Verdict::Pass(m) => println!("PASS  {name}: {m}"),
            Verdict::Skip(m) => println!("SKIP  {name}: {m}"),
            Verdict::Fail(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
        }
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

trait IntoVerdict {
    fn into_verdict(self) -> Verdict;
}

impl IntoVerdict for Outcome {
    fn into_verdict(self) -> Verdict {
        match self {
            Ok(m) => Verdict::Pass(m),
            Err(m) => Verdict::Fail(m),
        }
    }
}
