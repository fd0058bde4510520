//! Identifier-aware tokenizer shared by indexing and querying.
//!
//! A word is a maximal run of alphanumerics and underscores. Each word yields
//! its lowercased form, its camelCase/snake_case parts, and the parts joined
//! together, so `ObjectDetection` and `object_detection` share the token
//! `objectdetection` as well as `object` and `detection`.

/// Maximal runs of identifier characters.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Lowercased camelCase / snake_case parts of a single word.
pub fn word_parts(word: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for chunk in word.split('_').filter(|c| !c.is_empty()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let lower_to_upper = (prev.is_lowercase() || prev.is_numeric()) && cur.is_uppercase();
            let acronym_end = prev.is_uppercase()
                && cur.is_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if lower_to_upper || acronym_end {
                parts.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    parts
}

/// All tokens of a text, in order, with repeats (term frequencies count these).
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in words(text) {
        let lower = word.to_lowercase();
        let parts = word_parts(word);
        let joined: String = parts.concat();
        let multi = parts.len() > 1;
        out.push(lower.clone());
        for p in parts {
            if p != lower {
                out.push(p);
            }
        }
        if multi && joined != lower {
            out.push(joined);
        }
    }
    out
}

/// The part sequence of a text, used for phrase matching.
pub fn part_sequence(text: &str) -> Vec<String> {
    words(text).flat_map(word_parts).collect()
}
