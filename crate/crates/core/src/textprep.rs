//! Rule-based cleaning of raw social-media text.
//!
//! One pass applies, in order: HTML entity stripping, URL removal, @-mention
//! removal, retweet-marker removal, timestamp removal, hashtag unwrapping and
//! whitespace collapsing. Every removal substitutes a single space so that
//! deleting a span can never glue its neighbours into a new URL or mention.
//! Passes repeat until the text stops changing, which makes [`clean_text`]
//! idempotent by construction. Real tweets settle after one pass.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static HTML_ENTITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"&(?:[A-Za-z][A-Za-z0-9]*|#[0-9]+|#[xX][0-9A-Fa-f]+);").unwrap()
});
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://\S*|\bt\.co/\S*|\bwww\.\S+)").unwrap());
// Every '@' goes, together with the handle and an optional trailing colon.
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w*:?").unwrap());
static RETWEET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|\s)RT\b:?").unwrap());
static TIMESTAMP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b\d{1,2}:\d{2}(?::\d{2})?\b").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|\s)#+(\w)").unwrap());
static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

/// Text that has been through [`clean_text`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn single_pass(raw: &str) -> String {
    let s = HTML_ENTITY.replace_all(raw, " ");
    let s = URL.replace_all(&s, " ");
    let s = MENTION.replace_all(&s, " ");
    let s = RETWEET.replace_all(&s, "$1 ");
    let s = TIMESTAMP.replace_all(&s, " ");
    let s = HASHTAG.replace_all(&s, "$1$2");
    WHITESPACE.replace_all(&s, " ").trim().to_string()
}

/// Cleans one raw post. Total: degenerate input yields an empty result.
pub fn clean_text(raw: &str) -> CleanText {
    let mut current = single_pass(raw);
    loop {
        let next = single_pass(&current);
        if next == current {
            return CleanText(current);
        }
        current = next;
    }
}
