//! Cleaning of user text arriving from the web or a messaging platform.

use std::sync::OnceLock;

use regex::Regex;

fn tag_pattern() -> &'static Regex {
    static TAG: OnceLock<Regex> = OnceLock::new();
    TAG.get_or_init(|| Regex::new(r"<[^<>]*>").expect("static pattern"))
}

fn entity_pattern() -> &'static Regex {
    static ENTITY: OnceLock<Regex> = OnceLock::new();
    ENTITY.get_or_init(|| Regex::new(r"&(#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6}|[a-zA-Z]{2,6});").expect("static pattern"))
}

fn decode_entity(body: &str) -> Option<char> {
    if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match body {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        _ => return None,
    })
}

fn decode_entities(text: &str) -> String {
    entity_pattern()
        .replace_all(text, |caps: &regex::Captures<'_>| match decode_entity(&caps[1]) {
            Some(c) => c.to_string(),
            None => caps[0].to_string(),
        })
        .into_owned()
}

fn strip_controls(text: &str) -> String {
    text.chars()
        .filter_map(|c| match c {
            '\t' | '\n' | '\r' => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect()
}

fn pass(text: &str) -> String {
    let decoded = decode_entities(text);
    let stripped = tag_pattern().replace_all(&decoded, " ");
    strip_controls(&stripped).trim().to_string()
}

/// Decodes HTML entities, removes markup tags and control characters, and
/// trims. Repeats until nothing changes, so the result is a fixpoint:
/// `sanitize(sanitize(x)) == sanitize(x)`.
pub fn sanitize(text: &str) -> String {
    let mut current = pass(text);
    loop {
        let next = pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// True when `text` still holds something `sanitize` would remove.
pub fn has_markup_or_controls(text: &str) -> bool {
    tag_pattern().is_match(text) || text.chars().any(char::is_control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_tags_and_entities() {
        assert_eq!(sanitize("<b>3asslama</b>"), "3asslama");
        assert_eq!(sanitize("&lt;i&gt;hi&lt;/i&gt;"), "hi");
        assert_eq!(sanitize("fish &amp; chips"), "fish & chips");
        assert_eq!(sanitize("a&#x41;&#66;c"), "aABc");
        assert_eq!(sanitize("line\none\u{7}"), "line one");
        assert_eq!(sanitize("i <3 u"), "i <3 u");
        assert_eq!(sanitize("&bogus;"), "&bogus;");
        assert_eq!(sanitize("&amp;lt;b&amp;gt;x"), "x");
    }

    #[test]
    fn keeps_arabic_and_emoji() {
        assert_eq!(sanitize("  كيف حالك؟ 🙂 "), "كيف حالك؟ 🙂");
    }

    proptest! {
        #[test]
        fn idempotent(s in "(\\PC|<[a-z/]{0,4}>|&[a-z#0-9x]{0,5};|[\\x00-\\x1f])*") {
            let once = sanitize(&s);
            prop_assert_eq!(sanitize(&once), once.clone());
            prop_assert!(!has_markup_or_controls(&once));
        }
    }
}
