use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Where a search query came from: extracted keywords or the comment itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Keywords,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

/// Image search backend.
pub trait ImageSearch: Send + Sync {
    /// At most `limit` hits for `query`, urls deduplicated in first-seen order.
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>>;

    /// Logs the query together with its provenance, then searches.
    fn search_logged(&self, query: &str, kind: QueryKind, limit: usize) -> Result<Vec<SearchHit>> {
        let hits = self.search(query, limit)?;
        log::info!("image search kind={kind:?} query={query:?} hits={}", hits.len());
        Ok(hits)
    }
}

fn dedup_limit(hits: impl IntoIterator<Item = SearchHit>, limit: usize) -> Vec<SearchHit> {
    let mut seen = HashSet::new();
    hits.into_iter().filter(|h| seen.insert(h.url.clone())).take(limit).collect()
}

fn check_query(query: &str) -> Result<()> {
    if query.trim().is_empty() {
        return Err(CorpusError::InvalidInput("empty search query".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureRow {
    #[serde(default)]
    query: Option<String>,
    url: String,
    #[serde(default)]
    snippet: String,
}

/// Offline search over a JSONL fixture of `{query?, url, snippet}` rows.
/// Rows without a `query` answer every query.
#[derive(Debug, Clone, Default)]
pub struct StubImageSearch {
    rows: Vec<FixtureRow>,
}

impl StubImageSearch {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(line)
                    .map_err(|e| CorpusError::Schema { line: i + 1, message: e.to_string() })?,
            );
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

impl ImageSearch for StubImageSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
        check_query(query)?;
        let hits = self
            .rows
            .iter()
            .filter(|r| r.query.as_deref().is_none_or(|q| q == query))
            .map(|r| SearchHit { url: r.url.clone(), snippet: r.snippet.clone() });
        Ok(dedup_limit(hits, limit))
    }
}

/// Google Custom Search JSON API in image mode.
#[derive(Debug, Clone)]
pub struct GoogleImageSearch {
    pub endpoint: String,
    pub api_key: String,
    pub engine_id: String,
    pub timeout: Duration,
}

const GOOGLE_ENDPOINT: &str = "https://www.googleapis.com/customsearch/v1";
/// The API serves at most 10 results per page and 100 per query.
const PAGE_SIZE: usize = 10;
const MAX_RESULTS: usize = 100;

#[derive(Deserialize)]
struct GooglePage {
    #[serde(default)]
    items: Vec<GoogleItem>,
}

#[derive(Deserialize)]
struct GoogleItem {
    link: String,
    #[serde(default)]
    snippet: String,
}

impl GoogleImageSearch {
    pub fn new(api_key: impl Into<String>, engine_id: impl Into<String>) -> Self {
        Self {
            endpoint: GOOGLE_ENDPOINT.into(),
            api_key: api_key.into(),
            engine_id: engine_id.into(),
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `MODGUARD_SEARCH_KEY`, `MODGUARD_SEARCH_CX` and optionally
    /// `MODGUARD_SEARCH_URL`.
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| {
            std::env::var(k).map_err(|_| CorpusError::InvalidInput(format!("{k} is not set")))
        };
        let mut s = Self::new(var("MODGUARD_SEARCH_KEY")?, var("MODGUARD_SEARCH_CX")?);
        if let Ok(url) = std::env::var("MODGUARD_SEARCH_URL") {
            s.endpoint = url;
        }
        Ok(s)
    }
}

impl ImageSearch for GoogleImageSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
        check_query(query)?;
        let limit = limit.min(MAX_RESULTS);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut hits = Vec::new();
        let mut start = 1;
        while hits.len() < limit && start <= MAX_RESULTS {
            let num = PAGE_SIZE.min(limit - hits.len());
            let mut resp = agent
                .get(&self.endpoint)
                .query("key", &self.api_key)
                .query("cx", &self.engine_id)
                .query("q", query)
                .query("searchType", "image")
                .query("num", num.to_string())
                .query("start", start.to_string())
                .call()
                .map_err(|e| CorpusError::EndpointUnreachable(e.to_string()))?;
            let status = resp.status().as_u16();
            let body = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| CorpusError::EndpointUnreachable(e.to_string()))?;
            if status == 429 || (status == 403 && body.to_ascii_lowercase().contains("quota")) {
                return Err(CorpusError::QuotaExceeded(format!("HTTP {status}")));
            }
            if !(200..300).contains(&status) {
                return Err(CorpusError::EndpointUnreachable(format!("HTTP {status}")));
            }
            let page: GooglePage = serde_json::from_str(&body)
                .map_err(|e| CorpusError::EndpointUnreachable(format!("bad response: {e}")))?;
            let got = page.items.len();
            hits.extend(page.items.into_iter().map(|i| SearchHit { url: i.link, snippet: i.snippet }));
            if got < num {
                break;
            }
            start += PAGE_SIZE;
        }
        Ok(dedup_limit(hits, limit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"query":"angry mob","url":"http://a/1.png","snippet":"one"}
{"query":"angry mob","url":"http://a/2.png","snippet":"two"}
{"query":"puppy","url":"http://b/1.png","snippet":"dog"}
{"url":"http://c/any.png","snippet":"wildcard"}
"#;

    #[test]
    fn stub_returns_fixture_rows() {
        let s = StubImageSearch::from_jsonl(FIXTURE).unwrap();
        let hits = s.search("angry mob", 10).unwrap();
        assert_eq!(
            hits,
            vec![
                SearchHit { url: "http://a/1.png".into(), snippet: "one".into() },
                SearchHit { url: "http://a/2.png".into(), snippet: "two".into() },
                SearchHit { url: "http://c/any.png".into(), snippet: "wildcard".into() },
            ]
        );
        assert_eq!(s.search("puppy", 1).unwrap().len(), 1);
        assert!(s.search("angry mob", 0).unwrap().is_empty());
        assert!(s.search("  ", 3).is_err());
    }

    #[test]
    fn urls_are_deduplicated() {
        let s = StubImageSearch::from_jsonl(
            "{\"url\":\"http://x/1\",\"snippet\":\"a\"}\n{\"url\":\"http://x/1\",\"snippet\":\"b\"}\n",
        )
        .unwrap();
        assert_eq!(s.search_logged("q", QueryKind::Comment, 5).unwrap().len(), 1);
    }
}
