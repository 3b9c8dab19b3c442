//! Tokenization shared by symptom matching, classification and term scoring.

/// Lowercases and splits on every non-alphanumeric character.
///
/// Hashtag bodies survive as plain tokens (`#flu` -> `flu`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Extracts lowercased hashtags (without the leading `#`).
pub fn hashtags(text: &str) -> Vec<String> {
    let mut tags = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '#' {
            continue;
        }
        let start = i + c.len_utf8();
        let mut end = start;
        while let Some(&(j, d)) = chars.peek() {
            if d.is_alphanumeric() || d == '_' {
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        if end > start {
            tags.push(text[start..end].to_lowercase());
        }
    }
    tags
}

const STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// The bundled English stopword list.
pub fn default_stopwords() -> std::collections::BTreeSet<String> {
    parse_stopwords(STOPWORDS)
}

/// One word per line; `#` starts a comment line.
pub fn parse_stopwords(src: &str) -> std::collections::BTreeSet<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}
