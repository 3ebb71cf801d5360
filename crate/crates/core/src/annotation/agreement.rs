//! Pairwise annotator agreement: observed agreement and unweighted Cohen's kappa.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Agreement between annotators on one attribute. For a single pair,
/// `annotators` has two entries and `pairs` is empty; for a group, the scores
/// are means over the pairwise reports listed in `pairs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub attribute: String,
    pub annotators: Vec<String>,
    pub n_items: usize,
    pub percent_agreement: f64,
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<AgreementReport>,
}

/// Fraction of co-labeled items on which both annotators chose the same value.
/// `None` when there are no co-labeled items.
pub fn percent_agreement<S: AsRef<str>>(pairs: &[(S, S)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let agree = pairs.iter().filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    Some(agree as f64 / pairs.len() as f64)
}

/// Unweighted Cohen's kappa, `(p_o - p_e) / (1 - p_e)`, with the chance term
/// from each annotator's marginal distribution. Computed from integer counts so
/// the only rounding is the final division. Returns 1.0 when `p_e = 1`.
pub fn cohens_kappa<S: AsRef<str>>(pairs: &[(S, S)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as u128;
    let mut first: BTreeMap<&str, u128> = BTreeMap::new();
    let mut second: BTreeMap<&str, u128> = BTreeMap::new();
    let mut agree = 0u128;
    for (a, b) in pairs {
        *first.entry(a.as_ref()).or_default() += 1;
        *second.entry(b.as_ref()).or_default() += 1;
        if a.as_ref() == b.as_ref() {
            agree += 1;
        }
    }
    let chance: u128 = first
        .iter()
        .map(|(c, n1)| n1 * second.get(c).copied().unwrap_or(0))
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Some(1.0);
    }
    let numer = (agree * n) as f64 - chance as f64;
    Some(numer / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(a: &[&'static str], b: &[&'static str]) -> Vec<(&'static str, &'static str)> {
        a.iter().copied().zip(b.iter().copied()).collect()
    }

    #[test]
    fn identical_labels() {
        let a = ["C", "U", "C", "U", "C", "C", "U", "C", "U", "C"];
        let p = pairs(&a, &a);
        assert_eq!(percent_agreement(&p), Some(1.0));
        assert_eq!(cohens_kappa(&p), Some(1.0));
    }

    #[test]
    fn ten_item_fixture() {
        // A1: C on items 1-6, U on 7-10. A2: C on 1-5 and 7.
        let a1 = ["C", "C", "C", "C", "C", "C", "U", "U", "U", "U"];
        let a2 = ["C", "C", "C", "C", "C", "U", "C", "U", "U", "U"];
        let p = pairs(&a1, &a2);
        assert_eq!(percent_agreement(&p), Some(0.8));
        let k = cohens_kappa(&p).unwrap();
        assert!((k - 0.28 / 0.48).abs() < 1e-12, "{k}");
    }

    #[test]
    fn chance_level_kappa_is_zero() {
        let a1 = ["C", "C", "C", "C", "C", "U", "U", "U", "U", "U"];
        let a2 = ["C"; 10];
        assert_eq!(cohens_kappa(&pairs(&a1, &a2)), Some(0.0));
        assert_eq!(percent_agreement(&pairs(&a1, &a2)), Some(0.5));
    }

    #[test]
    fn disjoint_values() {
        let p = pairs(&["a", "a", "b", "b"], &["x", "y", "x", "y"]);
        assert_eq!(percent_agreement(&p), Some(0.0));
    }

    #[test]
    fn single_category_degenerate_case() {
        let p = pairs(&["C", "C", "C"], &["C", "C", "C"]);
        assert_eq!(cohens_kappa(&p), Some(1.0));
    }

    #[test]
    fn no_overlap() {
        let p: Vec<(&str, &str)> = vec![];
        assert_eq!(percent_agreement(&p), None);
        assert_eq!(cohens_kappa(&p), None);
    }
}
