//! Three-level ethnicity taxonomy, most general level first.

pub const UNKNOWN: &str = "Unknown";

/// Leaf categories in report order.
pub const LEAVES: [&str; 13] = [
    "Asian-GreaterEastAsian-EastAsian",
    "Asian-GreaterEastAsian-Japanese",
    "Asian-IndianSubContinent",
    "GreaterAfrican-Africans",
    "GreaterAfrican-Muslim",
    "GreaterEuropean-British",
    "GreaterEuropean-EastEuropean",
    "GreaterEuropean-Jewish",
    "GreaterEuropean-WestEuropean-French",
    "GreaterEuropean-WestEuropean-Germanic",
    "GreaterEuropean-WestEuropean-Hispanic",
    "GreaterEuropean-WestEuropean-Italian",
    "GreaterEuropean-WestEuropean-Nordic",
];

pub fn split_levels(category: &str) -> Vec<String> {
    category
        .split(['-', ',', '>'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn join_levels<S: AsRef<str>>(levels: &[S]) -> String {
    levels
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("-")
}

/// `["Unknown"]` or the levels of one of the [`LEAVES`].
pub fn is_valid_path<S: AsRef<str>>(levels: &[S]) -> bool {
    if levels.is_empty() || levels.len() > 3 {
        return false;
    }
    if levels.len() == 1 && levels[0].as_ref() == UNKNOWN {
        return true;
    }
    let joined = join_levels(levels);
    LEAVES.contains(&joined.as_str())
}

/// Resolves a category written as a full path (any of `-`, `,`, `>` as
/// separator) or as a bare final level such as `Hispanic`.
pub fn resolve_leaf(category: &str) -> Option<&'static str> {
    let levels = split_levels(category);
    if levels.is_empty() {
        return None;
    }
    let joined = join_levels(&levels);
    if let Some(leaf) = LEAVES.iter().find(|l| **l == joined) {
        return Some(leaf);
    }
    if levels.len() == 1 {
        let mut hits = LEAVES
            .iter()
            .filter(|l| l.rsplit('-').next() == Some(levels[0].as_str()));
        let first = hits.next()?;
        return hits.next().is_none().then_some(*first);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_paths_and_bare_leaves() {
        assert_eq!(
            resolve_leaf("GreaterEuropean,WestEuropean,Hispanic"),
            Some("GreaterEuropean-WestEuropean-Hispanic")
        );
        assert_eq!(resolve_leaf("Hispanic"), Some("GreaterEuropean-WestEuropean-Hispanic"));
        assert_eq!(resolve_leaf("British"), Some("GreaterEuropean-British"));
        assert_eq!(resolve_leaf("Martian"), None);
        assert_eq!(resolve_leaf("GreaterEuropean"), None);
    }

    #[test]
    fn path_validity() {
        assert!(is_valid_path(&["Unknown"]));
        assert!(is_valid_path(&["Asian", "IndianSubContinent"]));
        assert!(!is_valid_path(&["Asian"]));
        assert!(!is_valid_path::<&str>(&[]));
        assert!(!is_valid_path(&["GreaterEuropean", "WestEuropean", "Hispanic", "X"]));
    }
}
