//! Porter stemmer against frozen reference outputs.

use cryptohalal_core::textprep::porter::stem_word;

fn pairs(text: &str) -> Vec<(&str, &str)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_once('\t').expect("word<TAB>stem"))
        .collect()
}

fn mismatches(text: &str) -> Vec<String> {
    pairs(text)
        .into_iter()
        .filter_map(|(w, want)| {
            let got = stem_word(w);
            (got != want).then(|| format!("{w}: got {got}, want {want}"))
        })
        .collect()
}

#[test]
fn sample_vocabulary() {
    let text = include_str!("fixtures/porter_sample.txt");
    assert!(pairs(text).len() >= 80);
    let bad = mismatches(text);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn large_vocabulary() {
    let text = include_str!("fixtures/porter_vocabulary.txt");
    let bad = mismatches(text);
    assert!(bad.is_empty(), "{} mismatches: {:#?}", bad.len(), &bad[..bad.len().min(40)]);
}
