//! Golden outputs for a realistic landing page. Expected text and stems were
//! produced once by an independent converter (Python's html.parser with the
//! same block/raw-text rules, NLTK's original-algorithm Porter stemmer) and
//! reviewed by hand.

use std::num::NonZeroUsize;

use cryptohalal_core::featurex::Lexicon;
use cryptohalal_core::textprep::{strip_html, Preprocessor, RawDocument};
use cryptohalal_core::FeatureId;

const PAGE: &str = include_str!("fixtures/defi_site.html");
const TEXT: &str = include_str!("fixtures/defi_site.txt");
const STEMS: &str = include_str!("fixtures/defi_site.stems");

fn squash(s: &str) -> String {
    s.split([' ', '\t', '\n', '\r', '\x0c']).filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ")
}

#[test]
fn stripped_text_matches_golden() {
    assert_eq!(squash(&strip_html(PAGE)), TEXT.trim_end());
}

#[test]
fn stems_match_golden() {
    let stems = Preprocessor::default().preprocess(&RawDocument::html(PAGE)).unwrap();
    let expected: Vec<&str> = STEMS.lines().collect();
    assert_eq!(stems.as_slice(), expected.as_slice());
}

#[test]
fn extracted_features_match_hand_check() {
    let stems = Preprocessor::default().preprocess(&RawDocument::html(PAGE)).unwrap();
    let fv = Lexicon::default().extract(&stems, NonZeroUsize::MIN);
    let mut got: Vec<FeatureId> = fv.active().collect();
    got.sort_by_key(|f| f.index());
    use FeatureId::*;
    assert_eq!(
        got,
        [DeFi, Staking, SwapPlatform, Liquidity, Lending, Borrowing, Margin, YieldFarming, Governance]
    );
    let liquid: Vec<(String, usize)> =
        fv.evidence(Liquidity).iter().map(|h| (h.pattern.clone(), h.count)).collect();
    assert_eq!(liquid, [("liquid".to_string(), 3), ("liquid pool".to_string(), 1)]);
}
