use std::collections::BTreeSet;

pub const MAX_TAG_CHARS: usize = 64;

fn is_tag_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tags are `#` followed by 1-64 of `[A-Za-z0-9_]`, where the `#` is at the
/// start of the body or after whitespace. A run longer than 64 characters is
/// not a tag. Tags are lowercased and deduplicated.
pub fn extract_hashtags(body: &str) -> BTreeSet<String> {
    let mut tags = BTreeSet::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let at_boundary = i == 0 || chars[i - 1].is_whitespace();
        if chars[i] == '#' && at_boundary {
            let start = i + 1;
            let mut end = start;
            while end < chars.len() && is_tag_char(chars[end]) {
                end += 1;
            }
            let len = end - start;
            if (1..=MAX_TAG_CHARS).contains(&len) {
                tags.insert(
                    chars[start..end]
                        .iter()
                        .collect::<String>()
                        .to_ascii_lowercase(),
                );
            }
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    tags
}

/// Lowercases a tag given in a URL or query; strips one leading `#`.
pub fn normalize_tag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_ascii_lowercase()
}
