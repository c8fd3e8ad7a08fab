//! Website text preprocessing: tag stripping, tokenization, stopword
//! removal and Porter stemming, applied in that order.

mod html;
pub mod porter;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use html::{decode_entities, strip_html};

pub const DEFAULT_SIZE_LIMIT: usize = 4 * 1024 * 1024;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords-en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Html,
    Plain,
}

/// A fetched page body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub content: Vec<u8>,
    pub content_kind: ContentKind,
    pub source_url: Option<String>,
}

impl RawDocument {
    pub fn html(content: impl Into<Vec<u8>>) -> Self {
        RawDocument {
            content: content.into(),
            content_kind: ContentKind::Html,
            source_url: None,
        }
    }

    pub fn plain(content: impl Into<Vec<u8>>) -> Self {
        RawDocument {
            content: content.into(),
            content_kind: ContentKind::Plain,
            source_url: None,
        }
    }
}

/// Lowercase stems with stopwords removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StemSequence(pub Vec<String>);

impl StemSequence {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StemSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StemSequence(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TextPrepError {
    #[error("document is {size} bytes, over the {limit} byte limit")]
    TooLarge { size: usize, limit: usize },
    #[error("reading stopword list: {0}")]
    Io(#[from] std::io::Error),
}

/// Splits on every non-alphanumeric character, lowercases, and drops tokens
/// made only of digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_numeric()))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        StopwordList { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextPrepError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn remove_from(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().filter(|t| !self.contains(t)).collect()
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

pub fn stem(tokens: &[String]) -> StemSequence {
    tokens.iter().map(|t| porter::stem_word(t)).collect()
}

/// The full chain with its configuration.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub stopwords: StopwordList,
    pub size_limit: usize,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            stopwords: StopwordList::default(),
            size_limit: DEFAULT_SIZE_LIMIT,
        }
    }
}

impl Preprocessor {
    pub fn new(stopwords: StopwordList) -> Self {
        Preprocessor {
            stopwords,
            ..Default::default()
        }
    }

    /// Extracted plain text of a document (tags stripped for HTML).
    pub fn text(&self, doc: &RawDocument) -> Result<String, TextPrepError> {
        if doc.content.len() > self.size_limit {
            return Err(TextPrepError::TooLarge {
                size: doc.content.len(),
                limit: self.size_limit,
            });
        }
        let raw = String::from_utf8_lossy(&doc.content);
        Ok(match doc.content_kind {
            ContentKind::Html => strip_html(&raw),
            ContentKind::Plain => raw.into_owned(),
        })
    }

    pub fn preprocess(&self, doc: &RawDocument) -> Result<StemSequence, TextPrepError> {
        let text = self.text(doc)?;
        let tokens = self.stopwords.remove_from(tokenize(&text));
        Ok(stem(&tokens))
    }
}
