//! Surface-form normalization and the mention/name similarity score.

/// Lowercases, maps `_` to space, collapses whitespace and strips
/// punctuation from both ends. Idempotent.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase().replace('_', " ");
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Similarity of a mention and a knowledge-base name, in `[0, 1]`.
///
/// 1.0 iff the normalized forms are equal; `|shorter| / |longer|` when one
/// normalized form contains the other; otherwise one minus the edit
/// distance normalized by the longer length. Symmetric.
pub fn similarity(mention: &str, name: &str) -> f64 {
    normalized_similarity(&normalize(mention), &normalize(name))
}

/// [`similarity`] over already-normalized strings.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let a_len = a.chars().count();
    let b_len = b.chars().count();
    let (short, long, short_len, long_len) = if a_len <= b_len {
        (a, b, a_len, b_len)
    } else {
        (b, a, b_len, a_len)
    };
    if long.contains(short) {
        return short_len as f64 / long_len as f64;
    }
    let distance = edit_distance(a, b);
    (1.0 - distance as f64 / long_len as f64).max(0.0)
}

/// Upper bound of [`normalized_similarity`] given only the two lengths.
pub(crate) fn similarity_bound(a_len: usize, b_len: usize) -> f64 {
    if a_len == 0 && b_len == 0 {
        return 1.0;
    }
    let (lo, hi) = if a_len <= b_len { (a_len, b_len) } else { (b_len, a_len) };
    if lo == hi {
        // Equal lengths: equality or at least one substitution.
        return 1.0;
    }
    lo as f64 / hi as f64
}

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b_chars: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b_chars.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, cb) in b_chars.iter().enumerate() {
            let substitution = diagonal + usize::from(ca != *cb);
            diagonal = row[j + 1];
            row[j + 1] = substitution.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b_chars.len()]
}
