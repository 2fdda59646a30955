use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Augmenter, AugmentError, RephraseResult, Result};
use crate::textprep::CleanText;

const SYNONYMS: &[(&str, &[&str])] = &[
    ("bad", &["awful", "terrible", "lousy"]),
    ("good", &["great", "fine", "decent"]),
    ("hate", &["despise", "loathe", "detest"]),
    ("love", &["adore", "like", "enjoy"]),
    ("stupid", &["dumb", "foolish", "idiotic"]),
    ("people", &["folks", "everyone", "individuals"]),
    ("really", &["truly", "very", "seriously"]),
    ("think", &["believe", "feel", "reckon"]),
    ("happy", &["glad", "pleased", "cheerful"]),
    ("angry", &["mad", "furious", "upset"]),
    ("big", &["large", "huge", "massive"]),
    ("small", &["little", "tiny", "minor"]),
    ("nice", &["pleasant", "kind", "lovely"]),
    ("ugly", &["hideous", "unsightly", "gross"]),
    ("go", &["head", "move", "get"]),
    ("say", &["state", "claim", "mention"]),
    ("very", &["really", "extremely", "quite"]),
    ("friend", &["pal", "buddy", "mate"]),
    ("dog", &["pup", "hound", "canine"]),
    ("day", &["morning", "afternoon", "date"]),
];

const OPENERS: &[&str] = &[
    "honestly,",
    "frankly,",
    "well,",
    "look,",
    "so,",
    "basically,",
    "seriously,",
    "to be fair,",
    "in short,",
    "anyway,",
];

const CLOSERS: &[&str] = &["", " for real", " no doubt", " if you ask me", " to be honest", " plain and simple"];

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "am", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "do", "does",
    "for", "from", "had", "has", "have", "he", "her", "him", "his", "how", "i", "if", "in", "is", "it", "its",
    "just", "me", "my", "no", "not", "of", "on", "or", "our", "she", "so", "that", "the", "their", "them",
    "then", "there", "they", "this", "to", "too", "up", "us", "was", "we", "were", "what", "when", "who",
    "will", "with", "you", "your",
];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Offline, deterministic stand-in for the language model. Paraphrases by
/// seeded synonym substitution with a distinct opener/closer pair per
/// variant; keywords are the most frequent non-stopword tokens.
#[derive(Debug, Clone)]
pub struct StubAugmenter {
    pub seed: u64,
    synonyms: HashMap<&'static str, &'static [&'static str]>,
}

impl StubAugmenter {
    pub fn new(seed: u64) -> Self {
        Self { seed, synonyms: SYNONYMS.iter().copied().collect() }
    }

    fn variant(&self, words: &[&str], i: usize, rng: &mut ChaCha8Rng) -> String {
        let mut out = Vec::with_capacity(words.len() + 2);
        out.push(OPENERS[i % OPENERS.len()].to_string());
        for w in words {
            let key = w.to_lowercase();
            match self.synonyms.get(key.as_str()) {
                Some(alts) if rng.random_bool(0.5) => out.push(alts[rng.random_range(0..alts.len())].to_string()),
                _ => out.push((*w).to_string()),
            }
        }
        let closer = CLOSERS[(i / OPENERS.len()) % CLOSERS.len()];
        format!("{}{closer}", out.join(" "))
    }
}

impl Default for StubAugmenter {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Augmenter for StubAugmenter {
    fn rephrase(&self, text: &CleanText, n: usize) -> Result<RephraseResult> {
        super::check_request(text, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(text.as_str().as_bytes()));
        let words: Vec<&str> = text.as_str().split(' ').collect();
        let mut seen = HashSet::new();
        let mut variants = Vec::with_capacity(n);
        let cap = OPENERS.len() * CLOSERS.len();
        for i in 0..cap {
            if variants.len() == n {
                break;
            }
            let v = self.variant(&words, i, &mut rng);
            if v != text.as_str() && seen.insert(v.clone()) {
                variants.push(v);
            }
        }
        if variants.is_empty() {
            return Err(AugmentError::EmptyAfterFiltering);
        }
        let raw_response = serde_json::to_string(&variants).expect("strings serialise");
        Ok(RephraseResult { original: text.clone(), variants, raw_response })
    }

    fn extract_keywords(&self, text: &CleanText) -> Result<Vec<String>> {
        super::check_request(text, 1)?;
        let mut counts: Vec<(String, usize, usize)> = Vec::new();
        for (pos, t) in tokens(text.as_str()).into_iter().enumerate() {
            if STOPWORDS.contains(&t.as_str()) || t.chars().count() < 2 {
                continue;
            }
            match counts.iter_mut().find(|(w, _, _)| *w == t) {
                Some(e) => e.1 += 1,
                None => counts.push((t, 1, pos)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let kw: Vec<String> = counts.into_iter().take(3).map(|(w, _, _)| w).collect();
        if kw.is_empty() {
            return Err(AugmentError::EmptyAfterFiltering);
        }
        Ok(kw)
    }
}
