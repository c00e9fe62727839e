//! Tokenization and composite search text.

/// Lowercases and splits on anything that is not alphanumeric. Punctuation
/// and query operators are dropped, which is also how queries are sanitized.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Builds the `_search_text` of a revision: item name, kind, summary,
/// keywords, topics and the optional client override, in that order.
pub fn compose_search_text(
    item_name: &str,
    kind: &str,
    summary: &str,
    keywords: &[String],
    topics: &[String],
    embedding_text: Option<&str>,
) -> String {
    let mut parts: Vec<&str> = vec![item_name, kind, summary];
    parts.extend(keywords.iter().map(String::as_str));
    parts.extend(topics.iter().map(String::as_str));
    if let Some(extra) = embedding_text {
        parts.push(extra);
    }
    parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// True when the Levenshtein distance between `a` and `b` is at most one.
pub fn within_one_edit(a: &str, b: &str) -> bool {
    if a.is_ascii() && b.is_ascii() {
        return one_edit(a.as_bytes(), b.as_bytes());
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    one_edit(&a, &b)
}

fn one_edit<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    match long.len() - short.len() {
        0 => short.iter().zip(long.iter()).filter(|(x, y)| x != y).count() <= 1,
        1 => {
            let mut i = 0;
            while i < short.len() && short[i] == long[i] {
                i += 1;
            }
            short[i..] == long[i + 1..]
        }
        _ => false,
    }
}
