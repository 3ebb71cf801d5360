use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{given_name, normalize_name};
use crate::util::read_to_string;

pub const DEFAULT_GENDER_THRESHOLD: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Unknown => "Unknown",
        }
    }
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NameCounts {
    pub female: u64,
    pub male: u64,
}

/// Given-name frequencies by sex, summed over every input line (e.g. years).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NameGenderDb {
    names: HashMap<String, NameCounts>,
}

impl NameGenderDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn add(&mut self, name: &str, female: u64, male: u64) {
        let e = self.names.entry(normalize_name(name)).or_default();
        e.female += female;
        e.male += male;
    }

    pub fn get(&self, name: &str) -> Option<NameCounts> {
        self.names
            .get(&normalize_name(name))
            .copied()
            .filter(|c| c.female + c.male > 0)
    }

    /// Parses `name,F|M,count` lines.
    pub fn parse(path: &Path, content: &str) -> Result<Self> {
        let mut db = NameGenderDb::new();
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [name, sex, count] = fields[..] else {
                return Err(Error::parse(path, line_no, "expected name,F|M,count"));
            };
            if name.is_empty() {
                return Err(Error::parse(path, line_no, "empty name"));
            }
            let count: u64 = count
                .parse()
                .map_err(|e| Error::parse(path, line_no, format!("count: {e}")))?;
            match sex {
                "F" => db.add(name, count, 0),
                "M" => db.add(name, 0, count),
                other => return Err(Error::parse(path, line_no, format!("sex must be F or M, got {other:?}"))),
            }
        }
        db.names.retain(|_, c| c.female + c.male > 0);
        Ok(db)
    }
}

pub fn load_name_db(path: &Path) -> Result<NameGenderDb> {
    NameGenderDb::parse(path, &read_to_string(path)?)
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.5 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("gender threshold must be in (0.5, 1], got {threshold}")))
    }
}

/// Gender of the given name (first token of the normalized full name): a sex
/// whose share of the name's occurrences reaches `threshold`, else Unknown.
pub fn infer_gender(full_name: &str, db: &NameGenderDb, threshold: f64) -> Gender {
    let Some(counts) = given_name(full_name).and_then(|n| db.get(&n)) else {
        return Gender::Unknown;
    };
    gender_from_counts(counts, threshold)
}

pub fn gender_from_counts(counts: NameCounts, threshold: f64) -> Gender {
    let total = (counts.female + counts.male) as f64;
    if total == 0.0 {
        return Gender::Unknown;
    }
    let female_share = counts.female as f64 / total;
    if female_share >= threshold {
        Gender::Female
    } else if 1.0 - female_share >= threshold {
        Gender::Male
    } else {
        Gender::Unknown
    }
}
