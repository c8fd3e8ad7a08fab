//! The 18 binary predictive features, their priority classes, and the
//! feature vector shared by the corpus, the extractor and the learners.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

pub const FEATURE_COUNT: usize = 18;

/// A binary predictive feature. Declaration order is the canonical order
/// used for CSV columns, model weights and serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureId {
    PoW,
    EthereumBlockchain,
    PoS,
    DeFi,
    Speculation,
    Staking,
    SwapPlatform,
    Liquidity,
    Lending,
    Borrowing,
    PredictionMarket,
    Leverage,
    Margin,
    YieldFarming,
    Governance,
    FinancialProject,
    TechnicalProject,
    ServiceProject,
}

impl FeatureId {
    pub const ALL: [FeatureId; FEATURE_COUNT] = [
        FeatureId::PoW,
        FeatureId::EthereumBlockchain,
        FeatureId::PoS,
        FeatureId::DeFi,
        FeatureId::Speculation,
        FeatureId::Staking,
        FeatureId::SwapPlatform,
        FeatureId::Liquidity,
        FeatureId::Lending,
        FeatureId::Borrowing,
        FeatureId::PredictionMarket,
        FeatureId::Leverage,
        FeatureId::Margin,
        FeatureId::YieldFarming,
        FeatureId::Governance,
        FeatureId::FinancialProject,
        FeatureId::TechnicalProject,
        FeatureId::ServiceProject,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FeatureId> {
        Self::ALL.get(i).copied()
    }

    /// Column / wire name.
    pub fn name(self) -> &'static str {
        match self {
            FeatureId::PoW => "PoW",
            FeatureId::EthereumBlockchain => "Ethereum_Blockchain",
            FeatureId::PoS => "PoS",
            FeatureId::DeFi => "DeFi",
            FeatureId::Speculation => "Speculation",
            FeatureId::Staking => "Staking",
            FeatureId::SwapPlatform => "Swap_Platform",
            FeatureId::Liquidity => "Liquidity",
            FeatureId::Lending => "Lending",
            FeatureId::Borrowing => "Borrowing",
            FeatureId::PredictionMarket => "Prediction_Market",
            FeatureId::Leverage => "Leverage",
            FeatureId::Margin => "Margin",
            FeatureId::YieldFarming => "Yield_Farming",
            FeatureId::Governance => "Governance",
            FeatureId::FinancialProject => "Financial_Project",
            FeatureId::TechnicalProject => "Technical_Project",
            FeatureId::ServiceProject => "Service_Project",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FeatureId::PoW => "Cryptocurrency uses proof-of-work protocol",
            FeatureId::EthereumBlockchain => {
                "Cryptocurrency is based on Ethereum blockchain network"
            }
            FeatureId::PoS => "Cryptocurrency uses proof-of-stake protocol",
            FeatureId::DeFi => "Cryptocurrency project uses DeFi",
            FeatureId::Speculation => "Cryptocurrency project is based on speculation",
            FeatureId::Staking => "Cryptocurrency offer staking services",
            FeatureId::SwapPlatform => {
                "Cryptocurrency offers a decentralized swap platform to swap at best price"
            }
            FeatureId::Liquidity => "Cryptocurrency contains liquidity pools",
            FeatureId::Lending => "Cryptocurrency provides lending services",
            FeatureId::Borrowing => "Cryptocurrency provides borrowing services",
            FeatureId::PredictionMarket => {
                "Cryptocurrency participates in the prediction market based on bets"
            }
            FeatureId::Leverage => "Cryptocurrency project designed for gaining leverage",
            FeatureId::Margin => "Cryptocurrency project designed for margin trading",
            FeatureId::YieldFarming => {
                "Cryptocurrency provides yield farming services with passive income"
            }
            FeatureId::Governance => {
                "Cryptocurrency offers governance of the protocol for the future of the cryptocurrency"
            }
            FeatureId::FinancialProject => {
                "Cryptocurrency project is pure financial without additional project services"
            }
            FeatureId::TechnicalProject => {
                "Cryptocurrency project is technical that offers on-chain Decentralized App services and software development tools"
            }
            FeatureId::ServiceProject => {
                "Cryptocurrency project is based on services such as betting and media"
            }
        }
    }

    pub fn priority(self) -> Priority {
        use FeatureId::*;
        match self {
            Speculation | Borrowing | PredictionMarket | Leverage | Margin | YieldFarming => {
                Priority::High
            }
            Staking | SwapPlatform | Liquidity | Lending | Governance | FinancialProject
            | ServiceProject | DeFi => Priority::Low,
            PoW | EthereumBlockchain | PoS | TechnicalProject => Priority::Neutral,
        }
    }

    pub fn high_priority() -> impl Iterator<Item = FeatureId> {
        Self::ALL.into_iter().filter(|f| f.priority() == Priority::High)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature `{0}`")]
pub struct UnknownFeature(pub String);

impl FromStr for FeatureId {
    type Err = UnknownFeature;

    /// Exact canonical names, with an ASCII case-insensitive fallback.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FeatureId::ALL
            .iter()
            .find(|f| f.name() == s)
            .or_else(|| FeatureId::ALL.iter().find(|f| f.name().eq_ignore_ascii_case(s)))
            .copied()
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

impl Serialize for FeatureId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Priority class of a feature. Variant order is the explanation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Priority {
    High,
    Low,
    Neutral,
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Priority::High => "High",
            Priority::Low => "Low",
            Priority::Neutral => "Neutral",
        })
    }
}

/// Ruling label. Haram is the positive class (+1 / 1) for the learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Halal,
    Haram,
}

impl Label {
    pub fn is_haram(self) -> bool {
        self == Label::Haram
    }

    /// +1 for Haram, -1 for Halal.
    pub fn sign(self) -> f64 {
        match self {
            Label::Haram => 1.0,
            Label::Halal => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Halal => "Halal",
            Label::Haram => "Haram",
        }
    }

    /// The machine-verdict display string.
    pub fn probable_text(self) -> &'static str {
        match self {
            Label::Halal => "Probably Halal",
            Label::Haram => "Probably Haram",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ruling label `{0}` (expected Halal or Haram)")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Halal" => Ok(Label::Halal),
            "Haram" => Ok(Label::Haram),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// Where a verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Scholar,
    Machine,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Scholar => "scholar",
            Provenance::Machine => "machine",
        })
    }
}

/// One lexicon pattern that matched, with its number of occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternHit {
    pub pattern: String,
    pub count: usize,
}

/// 18 binary values in canonical order plus per-feature match evidence.
///
/// Vectors produced by the extractor satisfy `values[i] ⇔ !evidence[i].is_empty()`;
/// vectors loaded from datasets or entered by scholars carry no evidence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    values: [bool; FEATURE_COUNT],
    evidence: [Vec<PatternHit>; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: [bool; FEATURE_COUNT]) -> Self {
        FeatureVector {
            values: bits,
            ..Self::default()
        }
    }

    pub fn from_set(set: &[FeatureId]) -> Self {
        let mut fv = Self::zeros();
        for &f in set {
            fv.set(f, true);
        }
        fv
    }

    /// Accepts only 0/1 entries and exactly [`FEATURE_COUNT`] of them.
    pub fn from_slice(xs: &[u8]) -> Result<Self, DimensionError> {
        if xs.len() != FEATURE_COUNT {
            return Err(DimensionError::Length(xs.len()));
        }
        let mut fv = Self::zeros();
        for (i, &x) in xs.iter().enumerate() {
            match x {
                0 => {}
                1 => fv.values[i] = true,
                v => return Err(DimensionError::NonBinary { index: i, value: v }),
            }
        }
        Ok(fv)
    }

    pub fn get(&self, f: FeatureId) -> bool {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: FeatureId, on: bool) {
        self.values[f.index()] = on;
    }

    pub fn bits(&self) -> &[bool; FEATURE_COUNT] {
        &self.values
    }

    pub fn as_f64(&self) -> [f64; FEATURE_COUNT] {
        self.values.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn evidence(&self, f: FeatureId) -> &[PatternHit] {
        &self.evidence[f.index()]
    }

    pub fn add_evidence(&mut self, f: FeatureId, hit: PatternHit) {
        self.evidence[f.index()].push(hit);
    }

    pub fn active(&self) -> impl Iterator<Item = FeatureId> + '_ {
        FeatureId::ALL.into_iter().filter(|f| self.get(*f))
    }

    pub fn count_active(&self) -> usize {
        self.values.iter().filter(|b| **b).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.count_active() == 0
    }

    pub fn high_priority_count(&self) -> usize {
        FeatureId::high_priority().filter(|f| self.get(*f)).count()
    }

    /// Same values, evidence dropped.
    pub fn without_evidence(&self) -> Self {
        Self::from_bits(self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DimensionError {
    #[error("expected {FEATURE_COUNT} feature values, got {0}")]
    Length(usize),
    #[error("feature value at index {index} is {value}, expected 0 or 1")]
    NonBinary { index: usize, value: u8 },
}

// Serialized as `{"values": {"PoW": 0, ...}, "evidence": {"Margin": [...]}}`
// with every feature present in `values` in canonical order.
impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Values<'a>(&'a [bool; FEATURE_COUNT]);
        impl Serialize for Values<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(FEATURE_COUNT))?;
                for f in FeatureId::ALL {
                    m.serialize_entry(f.name(), &u8::from(self.0[f.index()]))?;
                }
                m.end()
            }
        }
        let evidence: BTreeMap<FeatureId, &Vec<PatternHit>> = FeatureId::ALL
            .into_iter()
            .filter(|f| !self.evidence[f.index()].is_empty())
            .map(|f| (f, &self.evidence[f.index()]))
            .collect();
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("values", &Values(&self.values))?;
        m.serialize_entry("evidence", &evidence)?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            values: BTreeMap<String, u8>,
            #[serde(default)]
            evidence: BTreeMap<FeatureId, Vec<PatternHit>>,
        }
        let raw = Raw::deserialize(d)?;
        let mut fv = FeatureVector::zeros();
        for (name, v) in raw.values {
            let f: FeatureId = name.parse().map_err(de::Error::custom)?;
            match v {
                0 => {}
                1 => fv.set(f, true),
                other => {
                    return Err(de::Error::custom(format!(
                        "feature `{name}` has value {other}, expected 0 or 1"
                    )))
                }
            }
        }
        for (f, hits) in raw.evidence {
            fv.evidence[f.index()] = hits;
        }
        Ok(fv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_partition_sizes() {
        let count = |p| FeatureId::ALL.iter().filter(|f| f.priority() == p).count();
        assert_eq!(count(Priority::High), 6);
        assert_eq!(count(Priority::Low), 8);
        assert_eq!(count(Priority::Neutral), 4);
        assert_eq!(FeatureId::ALL.len(), FEATURE_COUNT);
    }

    #[test]
    fn canonical_order_matches_index() {
        for (i, f) in FeatureId::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(FeatureId::from_index(i), Some(*f));
            assert_eq!(f.name().parse::<FeatureId>().unwrap(), *f);
        }
    }

    #[test]
    fn parse_is_case_tolerant() {
        assert_eq!("yield_farming".parse::<FeatureId>().unwrap(), FeatureId::YieldFarming);
        assert!("Flying_Project".parse::<FeatureId>().is_err());
    }

    #[test]
    fn from_slice_rejects_bad_input() {
        assert_eq!(FeatureVector::from_slice(&[0; 3]), Err(DimensionError::Length(3)));
        let mut xs = [0u8; FEATURE_COUNT];
        xs[4] = 2;
        assert_eq!(
            FeatureVector::from_slice(&xs),
            Err(DimensionError::NonBinary { index: 4, value: 2 })
        );
    }

    #[test]
    fn json_round_trip_keeps_evidence() {
        let mut fv = FeatureVector::from_set(&[FeatureId::Margin, FeatureId::Lending]);
        fv.add_evidence(
            FeatureId::Margin,
            PatternHit {
                pattern: "margin".into(),
                count: 2,
            },
        );
        let json = serde_json::to_string(&fv).unwrap();
        assert!(json.starts_with("{\"values\":{\"PoW\":0,"));
        let back: FeatureVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fv);
    }
}
