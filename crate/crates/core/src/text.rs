//! Unicode normalization helpers shared by tokenization, hashing and name lookup.

use unicode_normalization::UnicodeNormalization;

/// NFC, lowercase, internal whitespace collapsed to single spaces, trimmed.
pub fn normalize_name(name: &str) -> String {
    let nfc: String = name.nfc().collect();
    nfc.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// First whitespace-separated token of the normalized name.
pub fn given_name(full_name: &str) -> Option<String> {
    normalize_name(full_name)
        .split(' ')
        .next()
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_whitespace_and_case() {
        assert_eq!(normalize_name("  John   Smith "), "john smith");
        assert_eq!(normalize_name("JOHN\tSMITH"), "john smith");
    }

    #[test]
    fn composes_decomposed_accents() {
        // "e" + combining acute vs precomposed
        assert_eq!(normalize_name("Jose\u{301}"), normalize_name("Jos\u{e9}"));
    }

    #[test]
    fn given_name_is_first_token() {
        assert_eq!(given_name("Mary  Smith").as_deref(), Some("mary"));
        assert_eq!(given_name("   "), None);
    }
}
