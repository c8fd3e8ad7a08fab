//! Labeled coin datasets: CSV loading and saving, the corpus regularity
//! checks, and a seeded generator for constraint-satisfying fixtures.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::{FeatureId, FeatureVector, Label, FEATURE_COUNT};

/// Uppercase alphanumeric coin symbol, 1 to 12 characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ticker(String);

impl Ticker {
    pub const MAX_LEN: usize = 12;

    pub fn new(s: impl Into<String>) -> Result<Self, InvalidTicker> {
        let s = s.into();
        let ok = !s.is_empty()
            && s.len() <= Self::MAX_LEN
            && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if ok {
            Ok(Ticker(s))
        } else {
            Err(InvalidTicker(s))
        }
    }

    /// Uppercases and trims before validating.
    pub fn normalize(s: &str) -> Result<Self, InvalidTicker> {
        Self::new(s.trim().to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Ticker {
    type Error = InvalidTicker;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Ticker::new(s)
    }
}

impl From<Ticker> for String {
    fn from(t: Ticker) -> String {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ticker `{0}`: expected 1-12 uppercase letters or digits")]
pub struct InvalidTicker(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoinRecord {
    pub ticker: Ticker,
    pub name: Option<String>,
    pub features: FeatureVector,
    pub ruling: Label,
}

/// An ordered, immutable list of records with unique tickers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<CoinRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),
    #[error("unknown column `{0}` in header")]
    UnknownColumn(String),
    #[error("row {row}, column `{column}`: value `{value}` is not 0 or 1")]
    NonBinary {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `ticker`: {source}")]
    BadTicker { row: usize, source: InvalidTicker },
    #[error("row {row}, column `ticker`: duplicate ticker `{ticker}` (first seen at row {first_row})")]
    DuplicateTicker {
        row: usize,
        ticker: String,
        first_row: usize,
    },
    #[error("row {row}, column `ruling`: unknown label `{value}`")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Ticker,
    Name,
    Feature(FeatureId),
    Ruling,
}

fn classify_header(h: &str) -> Option<Column> {
    let t = h.trim();
    match t.to_ascii_lowercase().as_str() {
        "ticker" | "coin" => Some(Column::Ticker),
        "name" => Some(Column::Name),
        "ruling" => Some(Column::Ruling),
        _ => t.parse().ok().map(Column::Feature),
    }
}

impl Dataset {
    /// Rejects duplicate tickers (case-insensitive; tickers are uppercase already).
    pub fn new(records: Vec<CoinRecord>) -> Result<Self, DatasetError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(first) = seen.insert(r.ticker.as_str(), i + 1) {
                return Err(DatasetError::DuplicateTicker {
                    row: i + 1,
                    ticker: r.ticker.to_string(),
                    first_row: first,
                });
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[CoinRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.ruling == label).count()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(f)
    }

    pub fn from_reader<R: Read>(rdr: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(rdr);
        let headers = rdr.headers()?.clone();
        let mut columns = Vec::with_capacity(headers.len());
        for h in headers.iter() {
            let col = classify_header(h).ok_or_else(|| DatasetError::UnknownColumn(h.into()))?;
            if columns.contains(&col) {
                return Err(DatasetError::DuplicateColumn(h.into()));
            }
            columns.push(col);
        }
        if !columns.contains(&Column::Ticker) {
            return Err(DatasetError::MissingColumn("ticker".into()));
        }
        if !columns.contains(&Column::Ruling) {
            return Err(DatasetError::MissingColumn("ruling".into()));
        }
        for f in FeatureId::ALL {
            if !columns.contains(&Column::Feature(f)) {
                return Err(DatasetError::MissingColumn(f.name().into()));
            }
        }

        let mut records = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(DatasetError::RaggedRow {
                    row,
                    expected: columns.len(),
                    found: rec.len(),
                });
            }
            let mut ticker = None;
            let mut name = None;
            let mut ruling = None;
            let mut features = FeatureVector::zeros();
            for (col, cell) in columns.iter().zip(rec.iter()) {
                match *col {
                    Column::Ticker => {
                        let t = Ticker::normalize(cell)
                            .map_err(|source| DatasetError::BadTicker { row, source })?;
                        ticker = Some(t);
                    }
                    Column::Name => {
                        let n = cell.trim();
                        name = (!n.is_empty()).then(|| n.to_string());
                    }
                    Column::Ruling => {
                        let l = cell.parse::<Label>().map_err(|e| DatasetError::UnknownLabel {
                            row,
                            value: e.0,
                        })?;
                        ruling = Some(l);
                    }
                    Column::Feature(f) => match cell.trim() {
                        "0" => {}
                        "1" => features.set(f, true),
                        other => {
                            return Err(DatasetError::NonBinary {
                                row,
                                column: f.name().into(),
                                value: other.into(),
                            })
                        }
                    },
                }
            }
            let ticker = ticker.expect("ticker column checked");
            if let Some(&first_row) = seen.get(ticker.as_str()) {
                return Err(DatasetError::DuplicateTicker {
                    row,
                    ticker: ticker.to_string(),
                    first_row,
                });
            }
            seen.insert(ticker.to_string(), row);
            records.push(CoinRecord {
                ticker,
                name,
                features,
                ruling: ruling.expect("ruling column checked"),
            });
        }
        Ok(Dataset { records })
    }

    /// Canonical CSV: fixed header, canonical feature order, `\n` line endings.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(csv_header())?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(FEATURE_COUNT + 3);
            row.push(r.ticker.to_string());
            row.push(r.name.clone().unwrap_or_default());
            row.extend(r.features.bits().iter().map(|&b| u8::from(b).to_string()));
            row.push(r.ruling.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// SHA-256 over the feature bits and labels of all rows, sorted, so the
    /// hash identifies the training content independent of row order and names.
    pub fn content_hash(&self) -> String {
        let mut lines: Vec<String> = self
            .records
            .iter()
            .map(|r| {
                let bits: String = r
                    .features
                    .bits()
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect();
                format!("{},{},{}", r.ticker, bits, r.ruling)
            })
            .collect();
        lines.sort();
        let mut h = Sha256::new();
        for l in &lines {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

pub fn csv_header() -> Vec<&'static str> {
    let mut h = vec!["ticker", "name"];
    h.extend(FeatureId::ALL.iter().map(|f| f.name()));
    h.push("ruling");
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ConstraintId {
    C1,
    C2,
    C3,
    C4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintStatus {
    Pass,
    Fail,
    /// Checked, but not binding for this dataset size.
    Informational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintResult {
    pub id: ConstraintId,
    pub description: &'static str,
    pub status: ConstraintStatus,
    pub detail: String,
    pub offenders: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub results: Vec<ConstraintResult>,
}

impl ConstraintReport {
    pub fn get(&self, id: ConstraintId) -> &ConstraintResult {
        self.results.iter().find(|r| r.id == id).expect("all constraints reported")
    }

    pub fn passed(&self, id: ConstraintId) -> bool {
        self.get(id).status != ConstraintStatus::Fail
    }

    /// C1-C3 are the structural constraints; C4 only binds the 50-Haram corpus.
    pub fn structural_ok(&self) -> bool {
        [ConstraintId::C1, ConstraintId::C2, ConstraintId::C3]
            .iter()
            .all(|&c| self.passed(c))
    }

    pub fn all_ok(&self) -> bool {
        self.results.iter().all(|r| r.status != ConstraintStatus::Fail)
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let status = match r.status {
                ConstraintStatus::Pass => "PASS",
                ConstraintStatus::Fail => "FAIL",
                ConstraintStatus::Informational => "INFO",
            };
            writeln!(f, "{:?} {status:<4} {} ({})", r.id, r.description, r.detail)?;
            if !r.offenders.is_empty() {
                writeln!(f, "     offenders: {}", r.offenders.join(", "))?;
            }
        }
        Ok(())
    }
}

/// Features no Halal coin may carry.
pub const HALAL_FORBIDDEN: [FeatureId; 5] = [
    FeatureId::Lending,
    FeatureId::Borrowing,
    FeatureId::Leverage,
    FeatureId::Margin,
    FeatureId::PredictionMarket,
];

/// Haram count at which the DeFi+Liquidity regularity (C4) is binding.
pub const C4_HARAM_TOTAL: usize = 50;
pub const C4_DEFI_LIQUIDITY_COUNT: usize = 45;

pub fn validate_constraints(d: &Dataset) -> ConstraintReport {
    let tickers = |pred: &dyn Fn(&CoinRecord) -> bool| -> Vec<String> {
        d.records()
            .iter()
            .filter(|r| pred(r))
            .map(|r| r.ticker.to_string())
            .collect()
    };
    let verdict = |offenders: &[String]| {
        if offenders.is_empty() {
            ConstraintStatus::Pass
        } else {
            ConstraintStatus::Fail
        }
    };

    let c1 = tickers(&|r| r.ruling == Label::Halal && r.features.high_priority_count() > 0);
    let c2 = tickers(&|r| {
        r.ruling == Label::Halal && HALAL_FORBIDDEN.iter().any(|&f| r.features.get(f))
    });
    let c3 = tickers(&|r| r.ruling == Label::Haram && r.features.get(FeatureId::TechnicalProject));

    let haram = d.count(Label::Haram);
    let with_both = d
        .records()
        .iter()
        .filter(|r| {
            r.ruling == Label::Haram
                && r.features.get(FeatureId::DeFi)
                && r.features.get(FeatureId::Liquidity)
        })
        .count();
    let c4_status = if haram != C4_HARAM_TOTAL {
        ConstraintStatus::Informational
    } else if with_both == C4_DEFI_LIQUIDITY_COUNT {
        ConstraintStatus::Pass
    } else {
        ConstraintStatus::Fail
    };

    ConstraintReport {
        results: vec![
            ConstraintResult {
                id: ConstraintId::C1,
                description: "records with any High-priority feature are Haram",
                status: verdict(&c1),
                detail: format!("{} violating", c1.len()),
                offenders: c1,
            },
            ConstraintResult {
                id: ConstraintId::C2,
                description: "no Halal record lends, borrows, leverages, trades on margin or runs a prediction market",
                status: verdict(&c2),
                detail: format!("{} violating", c2.len()),
                offenders: c2,
            },
            ConstraintResult {
                id: ConstraintId::C3,
                description: "no Haram record is a technical project",
                status: verdict(&c3),
                detail: format!("{} violating", c3.len()),
                offenders: c3,
            },
            ConstraintResult {
                id: ConstraintId::C4,
                description: "45 of 50 Haram records use DeFi and liquidity pools",
                status: c4_status,
                detail: format!("{with_both} of {haram} Haram records have DeFi=1 and Liquidity=1"),
                offenders: Vec::new(),
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("need at least 1 Halal record (got {0})")]
    TooFewHalal(usize),
    #[error("need at least 2 Haram records (got {0})")]
    TooFewHaram(usize),
}

pub const AUDIO_LIKE_TICKER: &str = "AUDIOX";

/// Generates a labeled dataset that satisfies C1-C3 (and C4 when
/// `n_haram == 50`) and contains the mandated special records: one Halal
/// technical project and one Haram service project with no High feature.
pub fn synthesize_fixture(
    n_halal: usize,
    n_haram: usize,
    seed: u64,
) -> Result<Dataset, FixtureError> {
    if n_halal < 1 {
        return Err(FixtureError::TooFewHalal(n_halal));
    }
    if n_haram < 2 {
        return Err(FixtureError::TooFewHaram(n_haram));
    }
    use FeatureId::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_halal + n_haram);

    for i in 0..n_halal {
        let mut fv = FeatureVector::zeros();
        for (f, p) in [
            (PoW, 0.3),
            (EthereumBlockchain, 0.3),
            (PoS, 0.4),
            (DeFi, 0.15),
            (Staking, 0.35),
            (SwapPlatform, 0.1),
            (Liquidity, 0.1),
            (Governance, 0.2),
            (FinancialProject, 0.4),
            (ServiceProject, 0.15),
            (TechnicalProject, 0.5),
        ] {
            fv.set(f, rng.gen_bool(p));
        }
        if i == 0 {
            fv.set(TechnicalProject, true);
        }
        records.push(CoinRecord {
            ticker: Ticker(format!("HAL{:03}", i + 1)),
            name: Some(format!("Halal fixture {}", i + 1)),
            features: fv,
            ruling: Label::Halal,
        });
    }

    // Ordinary Haram records (all but the AUDIO-like one); the first
    // `n_both` of a seeded permutation get DeFi and Liquidity together.
    let ordinary = n_haram - 1;
    let n_both = if n_haram == C4_HARAM_TOTAL {
        C4_DEFI_LIQUIDITY_COUNT
    } else {
        ((n_haram as f64 * 0.9).round() as usize).min(ordinary)
    };
    let mut order: Vec<usize> = (0..ordinary).collect();
    order.shuffle(&mut rng);
    let mut both = vec![false; ordinary];
    for &i in &order[..n_both] {
        both[i] = true;
    }
    let high: Vec<FeatureId> = FeatureId::high_priority().collect();
    for (i, &defi_liquidity) in both.iter().enumerate() {
        let mut fv = FeatureVector::zeros();
        let k = [1, 1, 2, 2, 3][rng.gen_range(0..5)];
        for &f in high.choose_multiple(&mut rng, k) {
            fv.set(f, true);
        }
        for (f, p) in [
            (PoW, 0.05),
            (EthereumBlockchain, 0.6),
            (PoS, 0.2),
            (Staking, 0.4),
            (SwapPlatform, 0.5),
            (Lending, 0.5),
            (Governance, 0.4),
            (FinancialProject, 0.6),
            (ServiceProject, 0.15),
        ] {
            fv.set(f, rng.gen_bool(p));
        }
        if defi_liquidity {
            fv.set(DeFi, true);
            fv.set(Liquidity, true);
        } else {
            // at most one of the pair
            fv.set(DeFi, rng.gen_bool(0.5));
            fv.set(Liquidity, false);
        }
        records.push(CoinRecord {
            ticker: Ticker(format!("HAR{:03}", i + 1)),
            name: Some(format!("Haram fixture {}", i + 1)),
            features: fv,
            ruling: Label::Haram,
        });
    }

    records.push(CoinRecord {
        ticker: Ticker(AUDIO_LIKE_TICKER.into()),
        name: Some("Music streaming service".into()),
        features: FeatureVector::from_set(&[EthereumBlockchain, ServiceProject]),
        ruling: Label::Haram,
    });

    records.shuffle(&mut rng);
    Ok(Dataset { records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ticker: &str, set: &[FeatureId], ruling: Label) -> CoinRecord {
        CoinRecord {
            ticker: Ticker::new(ticker).unwrap(),
            name: None,
            features: FeatureVector::from_set(set),
            ruling,
        }
    }

    #[test]
    fn ticker_rules() {
        assert!(Ticker::new("BTC").is_ok());
        assert!(Ticker::new("A1B2C3D4E5F6").is_ok());
        assert!(Ticker::new("").is_err());
        assert!(Ticker::new("btc").is_err());
        assert!(Ticker::new("ABCDEFGHIJKLM").is_err());
        assert!(Ticker::new("BT-C").is_err());
        assert_eq!(Ticker::normalize(" btc ").unwrap().as_str(), "BTC");
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let csv = csv_header().join(",") + "\n";
        let d = Dataset::from_reader(csv.as_bytes()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn non_binary_value_names_row_and_column() {
        let d = synthesize_fixture(5, 5, 1).unwrap();
        let mut lines: Vec<String> = d.to_csv_string().lines().map(String::from).collect();
        // data row 7 is file line index 7 (header at index 0)
        let mut cells: Vec<String> = lines[7].split(',').map(String::from).collect();
        let col = 2 + FeatureId::Leverage.index();
        cells[col] = "2".into();
        lines[7] = cells.join(",");
        let err = Dataset::from_reader(lines.join("\n").as_bytes()).unwrap_err();
        match err {
            DatasetError::NonBinary { row, ref column, ref value } => {
                assert_eq!(row, 7);
                assert_eq!(column, "Leverage");
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 7"));
    }

    #[test]
    fn header_errors() {
        let mut h = csv_header();
        h.retain(|c| *c != "Margin");
        let err = Dataset::from_reader((h.join(",") + "\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "Margin"));

        let mut h = csv_header();
        h.push("PoW");
        let err = Dataset::from_reader((h.join(",") + "\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateColumn(c) if c == "PoW"));
    }

    #[test]
    fn duplicate_ticker_and_bad_label() {
        let zeros = vec!["0"; FEATURE_COUNT].join(",");
        let csv = format!(
            "{}\nBTC,,{zeros},Halal\nbtc,,{zeros},Halal\n",
            csv_header().join(",")
        );
        let err = Dataset::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateTicker { row: 2, first_row: 1, .. }));

        let csv = format!("{}\nBTC,,{zeros},Mubah\n", csv_header().join(","));
        let err = Dataset::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownLabel { row: 1, .. }));
    }

    #[test]
    fn columns_are_mapped_by_name() {
        // reversed column order, original-corpus style `Coin` header
        let mut h: Vec<&str> = csv_header();
        h[0] = "Coin";
        h.reverse();
        let mut cells: Vec<String> = vec!["0".into(); FEATURE_COUNT + 3];
        cells[0] = "Haram".into();
        cells[FEATURE_COUNT + 2] = "GNO".into();
        cells[FEATURE_COUNT + 1] = "Gnosis".into();
        // Prediction_Market sits at reversed position
        cells[FEATURE_COUNT - FeatureId::PredictionMarket.index()] = "1".into();
        let csv = format!("{}\n{}\n", h.join(","), cells.join(","));
        let d = Dataset::from_reader(csv.as_bytes()).unwrap();
        let r = &d.records()[0];
        assert_eq!(r.ticker.as_str(), "GNO");
        assert_eq!(r.name.as_deref(), Some("Gnosis"));
        assert_eq!(r.features.active().collect::<Vec<_>>(), vec![FeatureId::PredictionMarket]);
        assert_eq!(r.ruling, Label::Haram);
    }

    #[test]
    fn empty_dataset_passes_vacuously() {
        let rep = validate_constraints(&Dataset::default());
        assert!(rep.all_ok());
        assert_eq!(rep.get(ConstraintId::C4).status, ConstraintStatus::Informational);
    }

    #[test]
    fn halal_leverage_fails_c1_and_c2() {
        let d = Dataset::new(vec![record("LEV", &[FeatureId::Leverage], Label::Halal)]).unwrap();
        let rep = validate_constraints(&d);
        assert_eq!(rep.get(ConstraintId::C1).status, ConstraintStatus::Fail);
        assert_eq!(rep.get(ConstraintId::C1).offenders, vec!["LEV"]);
        assert_eq!(rep.get(ConstraintId::C2).offenders, vec!["LEV"]);
        assert!(rep.passed(ConstraintId::C3));
        assert!(!rep.structural_ok());
    }

    #[test]
    fn technical_haram_fails_c3() {
        let d = Dataset::new(vec![record("DEV", &[FeatureId::TechnicalProject], Label::Haram)])
            .unwrap();
        let rep = validate_constraints(&d);
        assert_eq!(rep.get(ConstraintId::C3).offenders, vec!["DEV"]);
    }

    #[test]
    fn c4_binds_only_at_fifty_haram() {
        let mut recs = Vec::new();
        for i in 0..50 {
            let set: &[FeatureId] = if i < 44 {
                &[FeatureId::DeFi, FeatureId::Liquidity]
            } else {
                &[]
            };
            recs.push(record(&format!("H{i}"), set, Label::Haram));
        }
        let rep = validate_constraints(&Dataset::new(recs.clone()).unwrap());
        assert_eq!(rep.get(ConstraintId::C4).status, ConstraintStatus::Fail);
        recs.pop();
        let rep = validate_constraints(&Dataset::new(recs).unwrap());
        assert_eq!(rep.get(ConstraintId::C4).status, ConstraintStatus::Informational);
    }

    #[test]
    fn fixture_106_passes_everything() {
        let d = synthesize_fixture(56, 50, 42).unwrap();
        assert_eq!(d.len(), 106);
        assert_eq!(d.count(Label::Halal), 56);
        assert_eq!(d.count(Label::Haram), 50);
        let rep = validate_constraints(&d);
        assert!(rep.all_ok(), "{rep}");
        assert_eq!(rep.get(ConstraintId::C4).status, ConstraintStatus::Pass);
    }

    #[test]
    fn minimal_fixture_inventory() {
        let d = synthesize_fixture(1, 2, 0).unwrap();
        assert_eq!(d.len(), 3);
        let halal: Vec<_> = d.records().iter().filter(|r| r.ruling == Label::Halal).collect();
        assert_eq!(halal.len(), 1);
        assert!(halal[0].features.get(FeatureId::TechnicalProject));
        let audio = d.records().iter().find(|r| r.ticker.as_str() == AUDIO_LIKE_TICKER).unwrap();
        assert_eq!(audio.ruling, Label::Haram);
        assert_eq!(audio.features.high_priority_count(), 0);
        assert!(audio.features.get(FeatureId::ServiceProject));
        let other = d
            .records()
            .iter()
            .filter(|r| r.ruling == Label::Haram && r.ticker.as_str() != AUDIO_LIKE_TICKER)
            .count();
        assert_eq!(other, 1);
        assert!(validate_constraints(&d).structural_ok());
    }

    #[test]
    fn fixture_counts_too_small() {
        assert_eq!(synthesize_fixture(0, 5, 1), Err(FixtureError::TooFewHalal(0)));
        assert_eq!(synthesize_fixture(5, 1, 1), Err(FixtureError::TooFewHaram(1)));
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = synthesize_fixture(56, 50, 7).unwrap().to_csv_string();
        let b = synthesize_fixture(56, 50, 7).unwrap().to_csv_string();
        assert_eq!(a, b);
        let c = synthesize_fixture(56, 50, 8).unwrap().to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn content_hash_ignores_row_order() {
        let d = synthesize_fixture(10, 10, 3).unwrap();
        let mut rev: Vec<CoinRecord> = d.records().to_vec();
        rev.reverse();
        assert_eq!(d.content_hash(), Dataset::new(rev).unwrap().content_hash());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn fixtures_satisfy_structural_constraints(
                seed in any::<u64>(), n_halal in 1usize..80, n_haram in 2usize..80
            ) {
                let d = synthesize_fixture(n_halal, n_haram, seed).unwrap();
                let rep = validate_constraints(&d);
                prop_assert!(rep.structural_ok(), "{}", rep);
                if n_haram == C4_HARAM_TOTAL {
                    prop_assert_eq!(rep.get(ConstraintId::C4).status, ConstraintStatus::Pass);
                }
            }

            #[test]
            fn csv_round_trip(seed in any::<u64>(), n in 1usize..30) {
                let d = synthesize_fixture(n, n + 1, seed).unwrap();
                let text = d.to_csv_string();
                let back = Dataset::from_reader(text.as_bytes()).unwrap();
                prop_assert_eq!(&back, &d);
                prop_assert_eq!(back.to_csv_string(), text);
            }
        }
    }
}
