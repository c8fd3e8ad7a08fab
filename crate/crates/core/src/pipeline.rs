//! The classify flow shared by the CLI and the HTTP service: store lookup,
//! metadata, page fetch, preprocessing, feature extraction, prediction,
//! explanation and caching.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Ticker;
use crate::featurex::{Explanation, Lexicon};
use crate::features::{Label, Provenance};
use crate::learners::{ModelKind, TrainedModel};
use crate::market::{MarketClient, MarketError};
use crate::rulestore::{RuleStore, RulingEntry, StoreError};
use crate::textprep::{Preprocessor, TextPrepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// log P(Haram | x) − log P(Halal | x)
    LogPosteriorMargin,
    ProbabilityHaram,
    DecisionValue,
}

impl ScoreKind {
    pub fn of(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Nb => ScoreKind::LogPosteriorMargin,
            ModelKind::Lr => ScoreKind::ProbabilityHaram,
            ModelKind::Svm => ScoreKind::DecisionValue,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            ScoreKind::LogPosteriorMargin => "log-posterior margin",
            ScoreKind::ProbabilityHaram => "probability of Haram",
            ScoreKind::DecisionValue => "decision value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub ticker: Ticker,
    pub name: Option<String>,
    pub verdict: Label,
    pub verdict_text: String,
    pub provenance: Provenance,
    /// Model score for machine verdicts; absent for scholar rulings.
    pub confidence: Option<f64>,
    pub score_kind: Option<ScoreKind>,
    pub model: Option<ModelKind>,
    pub explanation: Explanation,
    pub high_priority_majority: bool,
    /// No lexicon pattern matched: the verdict rests on model priors alone.
    pub low_evidence: bool,
    pub source_url: Option<String>,
    /// Scholar's reasoning, when present.
    pub note: Option<String>,
}

impl ClassifyResponse {
    pub fn from_scholar(e: &RulingEntry) -> Self {
        ClassifyResponse {
            ticker: e.ticker.clone(),
            name: e.name.clone(),
            verdict: e.verdict,
            verdict_text: e.verdict_text.clone(),
            provenance: e.provenance,
            confidence: None,
            score_kind: None,
            model: None,
            high_priority_majority: e.explanation.high_priority_majority,
            explanation: e.explanation.clone(),
            low_evidence: false,
            source_url: None,
            note: e.note.clone(),
        }
    }
}

impl fmt::Display for ClassifyResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.verdict_text)?;
        match &self.name {
            Some(n) => writeln!(f, "  coin        {} ({n})", self.ticker)?,
            None => writeln!(f, "  coin        {}", self.ticker)?,
        }
        match (self.provenance, self.model, self.confidence, self.score_kind) {
            (Provenance::Machine, Some(m), Some(c), Some(k)) => {
                writeln!(f, "  provenance  machine ({}, {} {c:+.4})", m.display_name(), k.describe())?
            }
            _ => writeln!(f, "  provenance  {}", provenance_str(self.provenance))?,
        }
        if let Some(u) = &self.source_url {
            writeln!(f, "  source      {u}")?;
        }
        if let Some(n) = &self.note {
            writeln!(f, "  note        {n}")?;
        }
        if self.low_evidence {
            writeln!(f, "  warning     low evidence: no lexicon pattern matched the page")?;
        }
        if self.high_priority_majority {
            writeln!(f, "  warning     most High-priority features are present")?;
        }
        if self.explanation.triggered.is_empty() {
            writeln!(f, "  triggered features: none")?;
        } else {
            writeln!(f, "  triggered features")?;
            for t in &self.explanation.triggered {
                writeln!(f, "    [{:?}] {}: {}", t.priority, t.feature.name(), t.description)?;
                if !t.evidence.is_empty() {
                    let ev: Vec<String> = t.evidence.iter().map(|h| format!("\"{}\" x{}", h.pattern, h.count)).collect();
                    writeln!(f, "        evidence: {}", ev.join(", "))?;
                }
            }
        }
        Ok(())
    }
}

fn provenance_str(p: Provenance) -> &'static str {
    match p {
        Provenance::Scholar => "scholar",
        Provenance::Machine => "machine",
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("unknown coin `{0}`")]
    UnknownCoin(String),
    /// The metadata provider or the project site failed.
    #[error(transparent)]
    Upstream(MarketError),
    /// Local setup problem (missing API key, unreadable fixtures).
    #[error(transparent)]
    Config(MarketError),
    #[error("page content unusable: {0}")]
    Content(#[from] TextPrepError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<MarketError> for PipelineError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::UnknownCoin(q) => PipelineError::UnknownCoin(q),
            e if e.is_upstream() => PipelineError::Upstream(e),
            e => PipelineError::Config(e),
        }
    }
}

pub struct Pipeline {
    pub model: Arc<TrainedModel>,
    pub lexicon: Arc<Lexicon>,
    pub preprocessor: Preprocessor,
    pub min_count: NonZeroUsize,
    pub market: MarketClient,
    pub store: Arc<RuleStore>,
}

impl Pipeline {
    pub fn classify(&self, query: &str) -> Result<ClassifyResponse, PipelineError> {
        if let Some(e) = self.store.lookup(query) {
            if e.provenance == Provenance::Scholar {
                return Ok(ClassifyResponse::from_scholar(&e));
            }
        }
        let meta = self.market.resolve_metadata(query)?;
        let ticker = Ticker::normalize(&meta.ticker).map_err(|e| {
            PipelineError::Upstream(MarketError::MalformedResponse(format!("provider symbol: {e}")))
        })?;
        // a name query can resolve to a ticker that a scholar has ruled on
        if let Some(e) = self.store.lookup(ticker.as_str()) {
            if e.provenance == Provenance::Scholar {
                return Ok(ClassifyResponse::from_scholar(&e));
            }
        }
        let doc = self.market.fetch_site(meta.website())?;
        let stems = self.preprocessor.preprocess(&doc)?;
        let features = self.lexicon.extract(&stems, self.min_count);
        let prediction = self.model.predict(&features);
        let name = Some(meta.name.clone()).filter(|n| !n.trim().is_empty());
        let entry = RulingEntry::machine(ticker.clone(), name.clone(), features.clone(), prediction.label);
        if let Err(e) = self.store.cache_machine_ruling(entry.clone()) {
            log::warn!("could not cache ruling for {ticker}: {e}");
        }
        let kind = self.model.kind();
        Ok(ClassifyResponse {
            ticker,
            name,
            verdict: prediction.label,
            verdict_text: entry.verdict_text,
            provenance: Provenance::Machine,
            confidence: Some(prediction.score),
            score_kind: Some(ScoreKind::of(kind)),
            model: Some(kind),
            high_priority_majority: entry.explanation.high_priority_majority,
            explanation: entry.explanation,
            low_evidence: features.is_all_zero(),
            source_url: doc.source_url,
            note: None,
        })
    }
}
