//! Word-level tokenisation shared by the embedder and the surrogate scorer.

/// Lowercased alphanumeric word tokens; every other character separates.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}
