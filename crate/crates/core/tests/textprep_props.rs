use modguard_core::textprep::clean_text;
use proptest::prelude::*;

// Fragments that exercise every rule and the boundaries between them.
const PIECES: &[&str] = &[
    "@", "@user", "@a_b:", "#", "##", "#tag", "RT", "RT:", "rt", "ART", "http://", "https://x.y/z", "t.co/",
    "www.", "www.a.b", "&amp;", "&#39;", "&#x1F600;", "&", ";", "12:30", "9:05:01", "123:45", ":", "/", ".",
    " ", "  ", "\t", "\n", "word", "C#", "\u{1F622}", "é", "x", "0",
];

fn tweetish() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(PIECES), 0..24).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn idempotent_on_fragments(s in tweetish()) {
        let once = clean_text(&s);
        prop_assert_eq!(clean_text(once.as_str()), once);
    }

    #[test]
    fn idempotent_on_any_string(s in any::<String>()) {
        let once = clean_text(&s);
        prop_assert_eq!(clean_text(once.as_str()), once);
    }

    #[test]
    fn output_shape(s in tweetish()) {
        let out = clean_text(&s);
        let t = out.as_str();
        prop_assert!(!t.contains('@'));
        prop_assert!(!t.to_ascii_lowercase().contains("http://"));
        prop_assert!(!t.contains("&amp;"));
        prop_assert!(!t.contains("  "));
        prop_assert_eq!(t.trim(), t);
        prop_assert!(!t.split(' ').any(|w| w == "RT"));
    }
}

#[test]
fn typical_tweet() {
    let raw = "RT @someone: can't believe this &amp; that #smh https://t.co/AbC123 12:04";
    assert_eq!(clean_text(raw).as_str(), "can't believe this that smh");
}
