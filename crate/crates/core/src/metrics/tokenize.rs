//! Shared caption tokenizer: lowercase, whitespace split, punctuation
//! stripped except the period of an abbreviated initial (`"T."`).

pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace()
        .filter_map(|word| {
            let lower = word.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric() && c != '.');
            if is_initials(trimmed) {
                return Some(trimmed.to_string());
            }
            let kept: String = lower.chars().filter(|c| c.is_alphanumeric()).collect();
            (!kept.is_empty()).then_some(kept)
        })
        .collect()
}

/// `t.` or `c.j.`: one or more single letters each followed by a period.
fn is_initials(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    !chars.is_empty()
        && chars.len().is_multiple_of(2)
        && chars.chunks(2).all(|p| p[0].is_alphabetic() && p[1] == '.')
}
