//! Character counting. Lengths everywhere are Unicode scalar values, not
//! bytes and not grapheme clusters.

pub const MAX_POST_CHARS: usize = 280;

pub fn scalar_len(s: &str) -> usize {
    s.chars().count()
}

/// Cuts `s` to at most `max` scalar values.
pub fn truncate_scalars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_scalars_not_bytes() {
        assert_eq!(scalar_len("héllo"), 5);
        assert_eq!(scalar_len("日本語"), 3);
        // family emoji is several scalars joined by ZWJ
        assert_eq!(scalar_len("👨‍👩‍👧"), 5);
        assert_eq!(scalar_len("e\u{301}"), 2);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "🙂".repeat(300);
        let t = truncate_scalars(&s, 280);
        assert_eq!(scalar_len(t), 280);
        assert_eq!(truncate_scalars("abc", 10), "abc");
    }
}
