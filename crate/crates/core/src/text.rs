//! Case folding and tokenization shared by lemmas, queries and entity names.

/// Lowercases `text` and splits it on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Normalizes a corpus token. Corpus tokens arrive pre-split, so only case
/// is folded; splitting them further would shift mention spans.
pub fn normalize_token(token: &str) -> String {
    token.to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_and_punctuation() {
        assert_eq!(tokenize("  Dolly   clone "), vec!["dolly", "clone"]);
        assert_eq!(tokenize("Tom_Cruise"), vec!["tom", "cruise"]);
        assert_eq!(tokenize("Austrian physicists, 1972!"), vec!["austrian", "physicists", "1972"]);
        assert!(tokenize(" ,.; ").is_empty());
    }
}
