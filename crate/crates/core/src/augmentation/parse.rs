/// Why no string array could be taken from a response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    /// No `[` anywhere.
    NoArray,
    /// An array opens but never closes.
    Unbalanced,
    /// Every balanced top-level array failed to decode as strings.
    NotStringArray(String),
}

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseFailure::NoArray => f.write_str("no JSON array in response"),
            ParseFailure::Unbalanced => f.write_str("JSON array is never closed"),
            ParseFailure::NotStringArray(e) => write!(f, "array is not a list of strings: {e}"),
        }
    }
}

/// Byte offset one past the `]` matching the `[` at `start`, skipping
/// brackets inside JSON strings.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First top-level balanced JSON array of strings in `text`. Prose and code
/// fences around it are ignored. Arrays nested inside a rejected candidate
/// are not tried, and a truncated array ends the search.
pub fn extract_string_array(text: &str) -> Result<Vec<String>, ParseFailure> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let mut last_err = None;
    while let Some(off) = bytes[pos..].iter().position(|&b| b == b'[') {
        let start = pos + off;
        let Some(end) = balanced_end(bytes, start) else {
            return Err(last_err.unwrap_or(ParseFailure::Unbalanced));
        };
        match serde_json::from_str::<Vec<String>>(&text[start..end]) {
            Ok(v) => return Ok(v),
            Err(e) => last_err = Some(ParseFailure::NotStringArray(e.to_string())),
        }
        pos = end;
    }
    Err(last_err.unwrap_or(ParseFailure::NoArray))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_and_wrapped() {
        assert_eq!(extract_string_array(r#"["a","b"]"#).unwrap(), vec!["a", "b"]);
        let fenced = "Sure! Here you go:\n```json\n[\"one\", \"two\"]\n```\nHope that helps.";
        assert_eq!(extract_string_array(fenced).unwrap(), vec!["one", "two"]);
        assert_eq!(extract_string_array(r#"[ "x]y", "q\"[" ]"#).unwrap(), vec!["x]y", "q\"["]);
        assert_eq!(extract_string_array("[]").unwrap(), Vec::<String>::new());
    }

    #[test]
    fn skips_non_string_candidates() {
        let t = r#"step [1] then ["real", "answer"]"#;
        assert_eq!(extract_string_array(t).unwrap(), vec!["real", "answer"]);
        // Nested arrays inside a rejected candidate are not partial answers.
        assert!(matches!(extract_string_array(r#"[["a"], ["b"]]"#), Err(ParseFailure::NotStringArray(_))));
    }

    #[test]
    fn failures() {
        assert_eq!(extract_string_array("no json here"), Err(ParseFailure::NoArray));
        assert_eq!(extract_string_array(r#"["a", "b"#), Err(ParseFailure::Unbalanced));
        assert_eq!(extract_string_array(r#"["a", ["b"]"#), Err(ParseFailure::Unbalanced));
        assert!(matches!(extract_string_array("[1, 2]"), Err(ParseFailure::NotStringArray(_))));
        assert!(matches!(extract_string_array("]["), Err(ParseFailure::Unbalanced)));
    }

    proptest! {
        #[test]
        fn never_panics(s in "\\PC{0,200}") {
            let _ = extract_string_array(&s);
        }

        #[test]
        fn finds_embedded_array(
            prefix in "[^\\[]{0,40}",
            items in proptest::collection::vec("\\PC{0,20}", 0..8),
            suffix in "\\PC{0,40}",
        ) {
            let text = format!("{prefix}{}{suffix}", serde_json::to_string(&items).unwrap());
            prop_assert_eq!(extract_string_array(&text).unwrap(), items);
        }

        #[test]
        fn truncation_is_never_partial(
            items in proptest::collection::vec("[a-z \\[\\]\"]{0,12}", 1..6),
            cut in 0.0f64..1.0,
        ) {
            let full = serde_json::to_string(&items).unwrap();
            let mut at = ((full.len() - 1) as f64 * cut) as usize;
            while !full.is_char_boundary(at) {
                at -= 1;
            }
            prop_assert!(extract_string_array(&full[..at]).is_err());
        }
    }
}
