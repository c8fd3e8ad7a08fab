//! Keyword-lexicon feature extraction and priority-ordered explanations.

use std::collections::HashMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{
    FeatureId, FeatureVector, Label, PatternHit, Priority, Provenance, FEATURE_COUNT,
};
use crate::textprep::{porter, StemSequence};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon-default.txt");

pub const MAX_PATTERN_LEN: usize = 4;

/// A contiguous run of 1 to 4 stems.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern(Vec<String>);

impl Pattern {
    pub fn stems(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `Feature_Name: pattern[, pattern...]`")]
    Syntax { line: usize },
    #[error("line {line}: unknown feature `{name}`")]
    UnknownFeature { line: usize, name: String },
    #[error("line {line}: pattern `{pattern}` must have 1 to {MAX_PATTERN_LEN} stems")]
    PatternLength { line: usize, pattern: String },
    #[error("line {line}: pattern `{pattern}` is not stemmed; did you mean `{suggestion}`?")]
    NotStemmed {
        line: usize,
        pattern: String,
        suggestion: String,
    },
}

/// Patterns per feature. Every term is a Porter fixed point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    entries: [Vec<Pattern>; FEATURE_COUNT],
}

impl Default for Lexicon {
    /// The shipped default lexicon.
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("default lexicon is valid")
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon {
            entries: Default::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Self::empty();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (name, patterns) = content
                .split_once(':')
                .ok_or(LexiconError::Syntax { line })?;
            let feature: FeatureId =
                name.trim()
                    .parse()
                    .map_err(|_| LexiconError::UnknownFeature {
                        line,
                        name: name.trim().to_string(),
                    })?;
            // `Feature:` alone declares no patterns
            if patterns.trim().is_empty() {
                continue;
            }
            for p in patterns.split(',') {
                let terms: Vec<&str> = p.split_whitespace().collect();
                if terms.is_empty() || terms.len() > MAX_PATTERN_LEN {
                    return Err(LexiconError::PatternLength {
                        line,
                        pattern: p.trim().to_string(),
                    });
                }
                let suggestion: Vec<String> = terms
                    .iter()
                    .map(|t| porter::stem_word(&t.to_lowercase()))
                    .collect();
                if terms.iter().zip(&suggestion).any(|(t, s)| t != s) {
                    return Err(LexiconError::NotStemmed {
                        line,
                        pattern: terms.join(" "),
                        suggestion: suggestion.join(" "),
                    });
                }
                lex.add(feature, Pattern(suggestion));
            }
        }
        Ok(lex)
    }

    /// Adds a pattern unless already present for the feature.
    fn add(&mut self, feature: FeatureId, pattern: Pattern) {
        let slot = &mut self.entries[feature.index()];
        if !slot.contains(&pattern) {
            slot.push(pattern);
        }
    }

    pub fn patterns(&self, feature: FeatureId) -> &[Pattern] {
        &self.entries[feature.index()]
    }

    /// Sets feature i iff one of its patterns occurs contiguously at least
    /// `min_count` times; evidence lists those patterns with their counts.
    pub fn extract(&self, stems: &StemSequence, min_count: NonZeroUsize) -> FeatureVector {
        let stems = stems.as_slice();
        // first stem -> (feature, pattern index)
        let mut by_head: HashMap<&str, Vec<(FeatureId, usize)>> = HashMap::new();
        for f in FeatureId::ALL {
            for (pi, p) in self.patterns(f).iter().enumerate() {
                by_head.entry(p.0[0].as_str()).or_default().push((f, pi));
            }
        }
        let mut counts: Vec<Vec<usize>> = FeatureId::ALL
            .iter()
            .map(|f| vec![0; self.patterns(*f).len()])
            .collect();
        for start in 0..stems.len() {
            let Some(cands) = by_head.get(stems[start].as_str()) else {
                continue;
            };
            for &(f, pi) in cands {
                let p = &self.patterns(f)[pi].0;
                if stems.len() - start >= p.len() && stems[start..start + p.len()] == p[..] {
                    counts[f.index()][pi] += 1;
                }
            }
        }

        let mut fv = FeatureVector::zeros();
        for f in FeatureId::ALL {
            for (pi, &count) in counts[f.index()].iter().enumerate() {
                if count >= min_count.get() {
                    fv.set(f, true);
                    fv.add_evidence(
                        f,
                        PatternHit {
                            pattern: self.patterns(f)[pi].to_string(),
                            count,
                        },
                    );
                }
            }
        }
        fv
    }
}

/// A feature set to 1, as shown to users.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggeredFeature {
    pub feature: FeatureId,
    pub priority: Priority,
    pub description: String,
    pub evidence: Vec<PatternHit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub verdict_text: String,
    pub triggered: Vec<TriggeredFeature>,
    /// More than half of the six High-priority features are set. Annotates
    /// the verdict; never overrides it.
    pub high_priority_majority: bool,
}

/// Builds the explanation for a verdict. Machine verdicts read "Probably
/// Halal"/"Probably Haram"; scholar verdicts carry the scholar's text, or
/// the bare label when none was given.
pub fn explain(
    fv: &FeatureVector,
    verdict: Label,
    provenance: Provenance,
    scholar_text: Option<&str>,
) -> Explanation {
    let verdict_text = match provenance {
        Provenance::Machine => verdict.probable_text().to_string(),
        Provenance::Scholar => scholar_text
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .unwrap_or(verdict.as_str())
            .to_string(),
    };
    let mut active: Vec<FeatureId> = fv.active().collect();
    active.sort_by_key(|f| (f.priority(), f.index()));
    let triggered = active
        .into_iter()
        .map(|f| TriggeredFeature {
            feature: f,
            priority: f.priority(),
            description: f.description().to_string(),
            evidence: fv.evidence(f).to_vec(),
        })
        .collect();
    Explanation {
        verdict_text,
        triggered,
        high_priority_majority: fv.high_priority_count() > 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(xs: &[&str]) -> StemSequence {
        xs.iter().copied().collect()
    }

    const ONE: NonZeroUsize = NonZeroUsize::MIN;

    #[test]
    fn load_accepts_stemmed_entry() {
        let lex = Lexicon::parse("Lending: lend").unwrap();
        assert_eq!(lex.patterns(FeatureId::Lending)[0].to_string(), "lend");
    }

    #[test]
    fn load_rejects_unstemmed_with_suggestion() {
        let err = Lexicon::parse("Lending: lending").unwrap_err();
        match err {
            LexiconError::NotStemmed { line, suggestion, .. } => {
                assert_eq!(line, 1);
                assert_eq!(suggestion, "lend");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = Lexicon::parse("Liquidity: liquidity pool").unwrap_err();
        assert!(err.to_string().contains("`liquid pool`"));
    }

    #[test]
    fn load_rejects_unknown_feature() {
        let err = Lexicon::parse("# c\nFlying_Project: fly").unwrap_err();
        assert!(matches!(err, LexiconError::UnknownFeature { line: 2, ref name } if name == "Flying_Project"));
    }

    #[test]
    fn load_rejects_bad_lines() {
        assert!(matches!(Lexicon::parse("Lending lend"), Err(LexiconError::Syntax { line: 1 })));
        assert!(matches!(
            Lexicon::parse("Lending: a b c d e"),
            Err(LexiconError::PatternLength { .. })
        ));
        assert!(matches!(
            Lexicon::parse("Lending: lend,,loan"),
            Err(LexiconError::PatternLength { .. })
        ));
    }

    #[test]
    fn default_lexicon_covers_every_feature() {
        let lex = Lexicon::default();
        for f in FeatureId::ALL {
            assert!(!lex.patterns(f).is_empty(), "{f} has no patterns");
        }
    }

    #[test]
    fn margin_and_leverage() {
        let fv = Lexicon::default().extract(&seq(&["margin", "trade", "leverag"]), ONE);
        assert_eq!(
            fv.active().collect::<Vec<_>>(),
            vec![FeatureId::Leverage, FeatureId::Margin]
        );
        assert_eq!(
            fv.evidence(FeatureId::Margin),
            &[
                PatternHit { pattern: "margin".into(), count: 1 },
                PatternHit { pattern: "margin trade".into(), count: 1 },
            ]
        );
    }

    #[test]
    fn empty_stems_give_zero_vector() {
        assert!(Lexicon::default().extract(&seq(&[]), ONE).is_all_zero());
    }

    #[test]
    fn liquidity_pool_phrase() {
        let lex = Lexicon::parse("Liquidity: liquid pool").unwrap();
        let fv = lex.extract(&seq(&["add", "liquid", "pool", "now"]), ONE);
        assert!(fv.get(FeatureId::Liquidity));
        // co-occurrence without contiguity does not count
        let fv = lex.extract(&seq(&["liquid", "asset", "pool"]), ONE);
        assert!(!fv.get(FeatureId::Liquidity));
    }

    #[test]
    fn min_count_threshold() {
        let lex = Lexicon::parse("Lending: lend").unwrap();
        let two = NonZeroUsize::new(2).unwrap();
        assert!(!lex.extract(&seq(&["lend"]), two).get(FeatureId::Lending));
        let fv = lex.extract(&seq(&["lend", "x", "lend"]), two);
        assert_eq!(fv.evidence(FeatureId::Lending)[0].count, 2);
    }

    #[test]
    fn explain_all_zero_machine_halal() {
        let e = explain(&FeatureVector::zeros(), Label::Halal, Provenance::Machine, None);
        assert_eq!(e.verdict_text, "Probably Halal");
        assert!(e.triggered.is_empty());
        assert!(!e.high_priority_majority);
    }

    #[test]
    fn explain_majority_rule() {
        use FeatureId::*;
        let three = FeatureVector::from_set(&[Speculation, Borrowing, Leverage]);
        assert!(!explain(&three, Label::Haram, Provenance::Machine, None).high_priority_majority);
        let four = FeatureVector::from_set(&[Speculation, Borrowing, Leverage, Margin]);
        assert!(explain(&four, Label::Haram, Provenance::Machine, None).high_priority_majority);
    }

    #[test]
    fn explain_orders_by_priority() {
        use FeatureId::*;
        let fv = FeatureVector::from_set(&[Staking, Leverage]);
        let e = explain(&fv, Label::Haram, Provenance::Machine, None);
        let order: Vec<_> = e.triggered.iter().map(|t| (t.feature, t.priority)).collect();
        assert_eq!(order, vec![(Leverage, Priority::High), (Staking, Priority::Low)]);

        let fv = FeatureVector::from_set(&[TechnicalProject, Governance, DeFi, Margin, PoW]);
        let e = explain(&fv, Label::Halal, Provenance::Machine, None);
        let order: Vec<_> = e.triggered.iter().map(|t| t.feature).collect();
        assert_eq!(order, vec![Margin, DeFi, Governance, PoW, TechnicalProject]);
    }

    #[test]
    fn explain_scholar_text() {
        let fv = FeatureVector::zeros();
        let e = explain(&fv, Label::Halal, Provenance::Scholar, Some("Halal (verified)"));
        assert_eq!(e.verdict_text, "Halal (verified)");
        let e = explain(&fv, Label::Haram, Provenance::Scholar, None);
        assert_eq!(e.verdict_text, "Haram");
    }

    #[test]
    fn explanation_serialization_is_stable() {
        let mut fv = FeatureVector::from_set(&[FeatureId::Margin, FeatureId::Staking]);
        fv.add_evidence(FeatureId::Margin, PatternHit { pattern: "margin".into(), count: 3 });
        let e = explain(&fv, Label::Haram, Provenance::Machine, None);
        let a = serde_json::to_string(&e).unwrap();
        let b = serde_json::to_string(&e.clone()).unwrap();
        assert_eq!(a, b);
        let back: Explanation = serde_json::from_str(&a).unwrap();
        assert_eq!(back, e);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const VOCAB: &[&str] = &["liquid", "pool", "lend", "margin", "trade", "x", "yield", "farm", "bet"];

        fn small_lexicon() -> Lexicon {
            Lexicon::parse(
                "Liquidity: liquid pool, liquid\nLending: lend\nMargin: margin trade\n\
                 Yield_Farming: yield farm, liquid pool x\nPrediction_Market: bet bet",
            )
            .unwrap()
        }

        fn stems() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec(proptest::sample::select(VOCAB), 0..40)
                .prop_map(|v| v.into_iter().map(String::from).collect())
        }

        /// Counts every window equal to the pattern.
        fn brute_force(stems: &[String], lex: &Lexicon) -> FeatureVector {
            let mut fv = FeatureVector::zeros();
            for f in FeatureId::ALL {
                for p in lex.patterns(f) {
                    let n = p.stems().len();
                    let count = (0..stems.len())
                        .filter(|&s| s + n <= stems.len())
                        .filter(|&s| (0..n).all(|k| stems[s + k] == p.stems()[k]))
                        .count();
                    if count >= 1 {
                        fv.set(f, true);
                        fv.add_evidence(f, PatternHit { pattern: p.to_string(), count });
                    }
                }
            }
            fv
        }

        proptest! {
            #[test]
            fn extract_matches_window_scan(s in stems()) {
                let lex = small_lexicon();
                let got = lex.extract(&StemSequence(s.clone()), ONE);
                prop_assert_eq!(got, brute_force(&s, &lex));
            }

            #[test]
            fn extract_is_monotone(s in stems(), extra in stems(), prepend in any::<bool>()) {
                // adding stems around a sequence never removes a match
                let lex = small_lexicon();
                let before = lex.extract(&StemSequence(s.clone()), ONE);
                let grown = if prepend {
                    extra.into_iter().chain(s).collect()
                } else {
                    s.into_iter().chain(extra).collect()
                };
                let after = lex.extract(&StemSequence(grown), ONE);
                for f in FeatureId::ALL {
                    prop_assert!(!before.get(f) || after.get(f));
                }
            }

            #[test]
            fn evidence_iff_value(s in stems(), min in 1usize..3) {
                let fv = small_lexicon().extract(&StemSequence(s), NonZeroUsize::new(min).unwrap());
                for f in FeatureId::ALL {
                    prop_assert_eq!(fv.get(f), !fv.evidence(f).is_empty());
                }
            }

            #[test]
            fn explain_order_is_total(bits in proptest::array::uniform18(any::<bool>())) {
                let fv = FeatureVector::from_bits(bits);
                let e = explain(&fv, Label::Halal, Provenance::Machine, None);
                prop_assert_eq!(e.triggered.len(), fv.count_active());
                for w in e.triggered.windows(2) {
                    prop_assert!((w[0].priority, w[0].feature.index()) < (w[1].priority, w[1].feature.index()));
                }
                prop_assert_eq!(e.high_priority_majority, fv.high_priority_count() > 3);
            }
        }
    }
}
