//! Seeded generator for a self-consistent demo dataset: a raw comment corpus
//! with author names, a gold-labeled engagement sample drawn from it, a
//! name-frequency file and an ethnicity training file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, FixedOffset};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ProviderKind};
use crate::corpus::{Corpus, CorpusRecord, SchemaSet, SOURCE_ATTRIBUTE};
use crate::enrichment::taxonomy::LEAVES;
use crate::error::Result;
use crate::pipeline::save;
use crate::sampling::{spam_filter, top_k_by_engagement, SpamRuleSet};
use crate::util::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_records: usize,
    /// Most-liked comments kept per source for the labeled sample.
    pub per_source_k: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_records: 2000,
            per_source_k: 100,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    /// Unlabeled corpus, author names included.
    pub full: Corpus,
    /// Spam-filtered engagement sample of `full` carrying gold labels.
    pub sampled: Corpus,
    pub name_db_csv: String,
    pub ethnicity_csv: String,
}

const SOURCES: [&str; 4] = ["CNN", "FOX", "MSN", "White House"];

const FEMALE_NAMES: [&str; 12] = [
    "mary", "linda", "susan", "karen", "nancy", "lisa", "betty", "sandra", "donna", "carol", "sharon", "michelle",
];
const MALE_NAMES: [&str; 12] = [
    "john", "james", "robert", "michael", "william", "david", "richard", "joseph", "thomas", "charles", "gary",
    "kevin",
];
const AMBIGUOUS_NAMES: [&str; 5] = ["taylor", "jordan", "casey", "jamie", "morgan"];
const RARE_NAMES: [&str; 4] = ["zephyr", "quill", "ravenna", "thorin"];

fn surnames(leaf: &str) -> &'static [&'static str] {
    match leaf.rsplit('-').next().unwrap_or("") {
        "EastAsian" => &["wang", "li", "zhang", "chen", "liu", "huang", "zhao", "wu"],
        "Japanese" => &["tanaka", "suzuki", "takahashi", "watanabe", "yamamoto", "nakamura", "kobayashi", "sato"],
        "IndianSubContinent" => &["patel", "sharma", "singh", "gupta", "reddy", "iyer", "chaudhary", "mehta"],
        "Africans" => &["okafor", "mensah", "adeyemi", "okonkwo", "boateng", "nwosu", "abiodun", "owusu"],
        "Muslim" => &["hassan", "rahman", "abdullah", "hussain", "karimi", "mahmoud", "siddiqui", "qureshi"],
        "British" => &["smith", "jones", "brown", "wilson", "clarke", "wright", "thompson", "walker"],
        "EastEuropean" => &["kowalski", "novak", "ivanov", "petrov", "horvat", "wisniewski", "popescu", "kuznetsov"],
        "Jewish" => &["cohen", "levy", "goldberg", "rosenberg", "katz", "friedman", "schwartz", "weinstein"],
        "French" => &["dubois", "moreau", "laurent", "lefebvre", "girard", "rousseau", "fontaine", "chevalier"],
        "Germanic" => &["muller", "schmidt", "schneider", "fischer", "weber", "becker", "hoffmann", "wagner"],
        "Hispanic" => &["garcia", "rodriguez", "martinez", "hernandez", "lopez", "gonzalez", "ramirez", "sanchez"],
        "Italian" => &["rossi", "russo", "ferrari", "esposito", "bianchi", "romano", "colombo", "ricci"],
        "Nordic" => &["johansson", "nilsson", "larsen", "andersen", "lindqvist", "halvorsen", "berg", "dahl"],
        _ => &[],
    }
}

/// Relative leaf frequencies, roughly those of a US news-comment audience.
const LEAF_WEIGHTS: [f64; 13] = [
    1291.0, 801.0, 1605.0, 1218.0, 1392.0, 35733.0, 1525.0, 7018.0, 2538.0, 1281.0, 4605.0, 3056.0, 1061.0,
];

fn keywords(attribute: &str, value: &str) -> &'static [&'static str] {
    match (attribute, value) {
        ("Against/For", "Against") => &["taxpayers", "handout", "nothing is free", "who pays", "more debt", "waste of money"],
        ("Against/For", "For") => &["great opportunity", "invest in", "education matters", "affordable", "our future", "fully support"],
        ("Against/For", "Uncommitted") => &["not sure", "maybe", "hard to say"],
        ("Neoliberalism/Social Good", "Neoliberalism") => &["free market", "personal responsibility", "competition", "private sector"],
        ("Neoliberalism/Social Good", "Social Good") => &["community", "public good", "everyone deserves", "society benefits"],
        ("OnTopic/Not-OnTopic", "On-Topic") => &["college", "tuition", "community college", "students", "degree", "classes"],
        ("OnTopic/Not-OnTopic", "Not On-Topic") => &["obama", "election", "healthcare", "immigration", "benghazi", "gas prices"],
        ("Civil/Uncivil", "Civil") => &["thank you", "i think", "respectfully", "good point", "fair enough"],
        ("Civil/Uncivil", "Uncivil") => &["idiots", "stupid", "liar", "pathetic", "ridiculous", "morons"],
        ("Political Leaning", "Conservative Leaning") => &["liberals", "socialism", "big government"],
        ("Political Leaning", "Liberal Leaning") => &["republicans", "corporate greed", "the rich"],
        ("Military Family", "Military Family") => &["veteran", "gi bill", "served"],
        ("Age Category", "29 and Under") => &["my student loans", "freshman"],
        ("Age Category", "50 and Over") => &["my grandkids", "retired"],
        _ => &[],
    }
}

const FILLER: [&str; 16] = [
    "the", "this", "is", "and", "we", "should", "it", "for", "a", "plan", "people", "just", "about", "what", "they",
    "really",
];

fn weighted<'a, R: Rng>(rng: &mut R, items: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for (v, w) in items {
        if x < *w {
            return v;
        }
        x -= w;
    }
    items[items.len() - 1].0
}

struct Author {
    name: String,
    gender: &'static str,
}

fn author<R: Rng>(rng: &mut R) -> Author {
    let gender = weighted(rng, &[("Male", 0.47), ("Female", 0.38), ("Unknown", 0.15)]);
    let given = match gender {
        "Male" => MALE_NAMES.choose(rng).unwrap(),
        "Female" => FEMALE_NAMES.choose(rng).unwrap(),
        _ if rng.random_bool(0.7) => AMBIGUOUS_NAMES.choose(rng).unwrap(),
        _ => RARE_NAMES.choose(rng).unwrap(),
    };
    let leaves: Vec<(&str, f64)> = LEAVES.iter().copied().zip(LEAF_WEIGHTS).collect();
    let leaf = weighted(rng, &leaves);
    let surname = surnames(leaf).choose(rng).unwrap();
    Author {
        name: format!("{} {}", cap_first(given), cap_first(surname)),
        gender,
    }
}

fn latent_labels<R: Rng>(rng: &mut R, gender: &str) -> BTreeMap<&'static str, &'static str> {
    let mut l = BTreeMap::new();
    let p_against = match gender {
        "Male" => 0.80,
        "Female" => 0.72,
        _ => 0.71,
    };
    let stance = if rng.random_bool(0.005) {
        "Uncommitted"
    } else if rng.random_bool(p_against) {
        "Against"
    } else {
        "For"
    };
    l.insert("Against/For", stance);
    let neo = if stance == "Against" { 0.85 } else { 0.35 };
    l.insert(
        "Neoliberalism/Social Good",
        weighted(rng, &[("Neoliberalism", neo * 0.97), ("Social Good", (1.0 - neo) * 0.97), ("Unknown", 0.03)]),
    );
    l.insert("OnTopic/Not-OnTopic", weighted(rng, &[("On-Topic", 0.61), ("Not On-Topic", 0.39)]));
    l.insert("Civil/Uncivil", weighted(rng, &[("Civil", 0.46), ("Uncivil", 0.54)]));
    let gender_label: &'static str = match gender {
        "Male" => "Male",
        "Female" => "Female",
        _ => "Unknown",
    };
    l.insert("Gender", gender_label);
    l.insert(
        "Age Category",
        weighted(rng, &[("29 and Under", 0.06), ("30-49", 0.31), ("50 and Over", 0.49), ("Unknown", 0.14)]),
    );
    l.insert(
        "Race",
        weighted(
            rng,
            &[
                ("White", 0.80),
                ("Black", 0.08),
                ("Latino (a)", 0.065),
                ("International", 0.013),
                ("Middle Eastern", 0.012),
                ("Asian", 0.01),
                ("Unknown", 0.02),
            ],
        ),
    );
    l.insert(
        "Military Family",
        weighted(rng, &[("Military Family", 0.18), ("Not Military Family", 0.818), ("Undetermined", 0.002)]),
    );
    let cons = if stance == "Against" { 0.65 } else { 0.35 };
    l.insert(
        "Political Leaning",
        weighted(
            rng,
            &[("Conservative Leaning", cons), ("Liberal Leaning", 0.8 - cons), ("Undetermined", 0.2)],
        ),
    );
    l
}

fn compose<R: Rng>(rng: &mut R, labels: &BTreeMap<&'static str, &'static str>) -> String {
    let mut parts: Vec<&str> = Vec::new();
    let add = |rng: &mut R, attr: &str, value: &str, n: usize, parts: &mut Vec<&'static str>| {
        let pool = keywords(attr, value);
        for _ in 0..n {
            if let Some(k) = pool.choose(rng) {
                parts.push(k);
            }
        }
    };
    add(rng, "Against/For", labels["Against/For"], 2, &mut parts);
    add(rng, "Neoliberalism/Social Good", labels["Neoliberalism/Social Good"], 1, &mut parts);
    add(rng, "OnTopic/Not-OnTopic", labels["OnTopic/Not-OnTopic"], 2, &mut parts);
    let n_civility = rng.random_range(1..=2);
    add(rng, "Civil/Uncivil", labels["Civil/Uncivil"], n_civility, &mut parts);
    for attr in ["Political Leaning", "Military Family", "Age Category"] {
        if rng.random_bool(0.5) {
            add(rng, attr, labels[attr], 1, &mut parts);
        }
    }
    if rng.random_bool(0.2) {
        let attr = *["Against/For", "OnTopic/Not-OnTopic", "Civil/Uncivil"].choose(rng).unwrap();
        let other = match (attr, labels[attr]) {
            ("Against/For", "Against") => "For",
            ("Against/For", _) => "Against",
            ("OnTopic/Not-OnTopic", "On-Topic") => "Not On-Topic",
            ("OnTopic/Not-OnTopic", _) => "On-Topic",
            (_, "Civil") => "Uncivil",
            _ => "Civil",
        };
        add(rng, attr, other, 1, &mut parts);
    }
    for _ in 0..rng.random_range(4..=8) {
        parts.push(FILLER.choose(rng).unwrap());
    }
    parts.shuffle(rng);
    let mut text = parts.join(" ");
    if let Some(first) = text.get(0..1) {
        let upper = first.to_uppercase();
        text.replace_range(0..1, &upper);
    }
    text.push('.');
    text
}

fn spam_text<R: Rng>(rng: &mut R, previous: &[String]) -> String {
    match rng.random_range(0..3) {
        0 => "http://deals.example/tuition www.cheap-degrees.example".to_string(),
        1 => ["lol", "first", "^"].choose(rng).unwrap().to_string(),
        _ => previous
            .choose(rng)
            .cloned()
            .unwrap_or_else(|| "http://spam.example".to_string()),
    }
}

fn name_db_csv() -> String {
    let mut out = String::new();
    for (i, n) in FEMALE_NAMES.iter().enumerate() {
        let f = 5000 + 300 * i as u64;
        out.push_str(&format!("{},F,{}\n{},M,{}\n{},F,{}\n", cap_first(n), f, cap_first(n), 10 + i, cap_first(n), f / 10));
    }
    for (i, n) in MALE_NAMES.iter().enumerate() {
        let m = 6000 + 250 * i as u64;
        out.push_str(&format!("{},M,{}\n{},F,{}\n{},M,{}\n", cap_first(n), m, cap_first(n), 15 + i, cap_first(n), m / 10));
    }
    for (i, n) in AMBIGUOUS_NAMES.iter().enumerate() {
        out.push_str(&format!("{},F,{}\n{},M,{}\n", cap_first(n), 4000 + 100 * i, cap_first(n), 4300 - 50 * i));
    }
    out
}

fn cap_first(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

const TRAINING_GIVEN: [&str; 6] = ["alex", "sam", "chris", "pat", "lee", "dana"];

fn ethnicity_csv() -> String {
    let mut out = String::from("name,category\n");
    for leaf in LEAVES {
        let short = leaf.rsplit('-').next().unwrap();
        for (i, s) in surnames(leaf).iter().enumerate() {
            for g in TRAINING_GIVEN.iter().skip(i % 2).step_by(2) {
                let cat = if i % 3 == 0 { short } else { leaf };
                out.push_str(&format!("{} {},{}\n", cap_first(g), cap_first(s), cat));
            }
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start: DateTime<FixedOffset> = DateTime::parse_from_rfc3339("2015-01-08T00:00:00-05:00").expect("literal timestamp");
    let window_minutes = 8 * 24 * 60;

    let mut records = Vec::with_capacity(cfg.n_records);
    let mut gold: BTreeMap<String, BTreeMap<&'static str, &'static str>> = BTreeMap::new();
    let mut texts: Vec<String> = Vec::new();
    for i in 0..cfg.n_records {
        let id = format!("c{i:05}");
        let source = *SOURCES.choose(&mut rng).unwrap();
        let who = author(&mut rng);
        let labels = latent_labels(&mut rng, who.gender);
        let text = if rng.random_bool(0.02) {
            spam_text(&mut rng, &texts)
        } else {
            compose(&mut rng, &labels)
        };
        let likes = (rng.random::<f64>().powi(3) * 800.0) as u64;
        let mut r = CorpusRecord::new(id.clone(), text.clone())
            .with_source(source)
            .with_likes(likes)
            .with_author(who.name);
        r.created_at = Some(start + Duration::minutes(rng.random_range(0..window_minutes)));
        texts.push(text);
        gold.insert(id, labels);
        records.push(r);
    }

    let provenance = format!("synthetic seed={}", cfg.seed);
    let full = Corpus::new(records, SchemaSet::default()).with_provenance(provenance.clone());
    let top = top_k_by_engagement(&full, cfg.per_source_k, SOURCE_ATTRIBUTE)?;
    let filtered = spam_filter(&top, &SpamRuleSet::default()).kept;
    let labeled = filtered
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for (attr, value) in &gold[&r.id] {
                r.gold_labels.insert(attr.to_string(), value.to_string());
            }
            r
        })
        .collect();
    let sampled = full.derive(labeled).with_provenance(format!("{provenance}, top {} per source", cfg.per_source_k));

    Ok(SyntheticDataset {
        full,
        sampled,
        name_db_csv: name_db_csv(),
        ethnicity_csv: ethnicity_csv(),
    })
}

#[derive(Clone, Debug)]
pub struct WrittenDataset {
    pub full: PathBuf,
    pub sampled: PathBuf,
    pub name_db: PathBuf,
    pub ethnicity_training: PathBuf,
    pub config: PathBuf,
}

impl SyntheticDataset {
    /// Writes the corpora, the two CSV files and a pipeline config whose
    /// relative paths point at them.
    pub fn write(&self, dir: &Path) -> Result<WrittenDataset> {
        let out = WrittenDataset {
            full: dir.join("full.jsonl"),
            sampled: dir.join("sampled.jsonl"),
            name_db: dir.join("names.csv"),
            ethnicity_training: dir.join("ethnicity_train.csv"),
            config: dir.join("config.json"),
        };
        save(&self.full, &out.full)?;
        save(&self.sampled, &out.sampled)?;
        write_atomic(&out.name_db, self.name_db_csv.as_bytes())?;
        write_atomic(&out.ethnicity_training, self.ethnicity_csv.as_bytes())?;
        let mut cfg = PipelineConfig::default();
        cfg.paths.raw_corpus = Some("full.jsonl".into());
        cfg.paths.sampled_corpus = Some("sampled.jsonl".into());
        cfg.paths.name_db = Some("names.csv".into());
        cfg.paths.models_dir = "models".into();
        cfg.paths.output_dir = "out".into();
        cfg.enrichment.provider = ProviderKind::Local;
        cfg.enrichment.local_training = Some("ethnicity_train.csv".into());
        let json = serde_json::to_string_pretty(&cfg)? + "\n";
        write_atomic(&out.config, json.as_bytes())?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate;
    use crate::enrichment::{taxonomy, NameGenderDb};

    fn small() -> SyntheticDataset {
        generate(&SynthConfig {
            n_records: 300,
            per_source_k: 20,
            seed: 7,
        })
        .unwrap()
    }

    #[test]
    fn deterministic_and_valid() {
        let a = small();
        assert_eq!(a, small());
        assert!(validate(&a.full).is_empty());
        assert!(validate(&a.sampled).is_empty());
        assert_eq!(a.full.len(), 300);
        assert!(a.sampled.len() <= 80 && a.sampled.len() > 60);
        assert!(a.sampled.records.iter().all(|r| r.gold_labels.len() == 9));
        assert!(a.full.records.iter().all(|r| r.gold_labels.is_empty()));
    }

    #[test]
    fn auxiliary_files_parse() {
        let d = small();
        let db = NameGenderDb::parse(Path::new("names.csv"), &d.name_db_csv).unwrap();
        assert!(db.get("mary").unwrap().female > 5000);
        for line in d.ethnicity_csv.lines().skip(1) {
            let (_, cat) = line.rsplit_once(',').unwrap();
            assert!(taxonomy::resolve_leaf(cat).is_some(), "{cat}");
        }
    }
}
