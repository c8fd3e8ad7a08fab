//! On-disk model format.
//!
//! ```text
//! CHMODEL1
//! sha256:<hex digest of the body>
//! <JSON body>
//! ```
//!
//! The body is `{"format_version":1,"kind":..,"params":..,"meta":..}`.
//! Floats are written with shortest round-trip formatting, so a reloaded
//! model predicts bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelParams, TrainedModel, TrainingMeta};

pub const MAGIC: &str = "CHMODEL1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (missing {MAGIC} header)")]
    BadMagic,
    #[error("model checksum mismatch (file truncated or modified)")]
    Checksum,
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("malformed model body: {0}")]
    Parse(String),
}

#[derive(Serialize)]
struct BodyOut<'a> {
    format_version: u32,
    #[serde(flatten)]
    params: &'a ModelParams,
    meta: &'a TrainingMeta,
}

#[derive(Deserialize)]
struct BodyIn {
    format_version: u32,
    #[serde(flatten)]
    params: ModelParams,
    meta: TrainingMeta,
}

pub fn to_bytes(model: &TrainedModel) -> Vec<u8> {
    let body = serde_json::to_string_pretty(&BodyOut {
        format_version: FORMAT_VERSION,
        params: &model.params,
        meta: &model.meta,
    })
    .expect("model serializes");
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{MAGIC}\nsha256:{digest}\n{body}\n").into_bytes()
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel, ModelIoError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ModelIoError::BadMagic)?;
    let rest = text
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix('\n'))
        .ok_or(ModelIoError::BadMagic)?;
    let (sum_line, body) = rest.split_once('\n').ok_or(ModelIoError::Checksum)?;
    let expected = sum_line.strip_prefix("sha256:").ok_or(ModelIoError::Checksum)?;
    let body = body.strip_suffix('\n').unwrap_or(body);
    if hex::encode(Sha256::digest(body.as_bytes())) != expected {
        return Err(ModelIoError::Checksum);
    }
    let version: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ModelIoError::Parse(e.to_string()))?;
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(ModelIoError::Version(v as u32)),
        None => return Err(ModelIoError::Parse("missing format_version".into())),
    }
    let parsed: BodyIn = serde_json::from_value(version).map_err(|e| ModelIoError::Parse(e.to_string()))?;
    debug_assert_eq!(parsed.format_version, FORMAT_VERSION);
    Ok(TrainedModel {
        params: parsed.params,
        meta: parsed.meta,
    })
}

/// Writes via a sibling temp file and rename, so a crash never leaves a
/// half-written model at `path`.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelIoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("model")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&to_bytes(model))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelIoError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthesize_fixture;
    use crate::features::FeatureVector;
    use crate::learners::{train, Hyperparams, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_predicts_identically() {
        let d = synthesize_fixture(25, 25, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probes: Vec<FeatureVector> = (0..100)
            .map(|_| FeatureVector::from_bits(std::array::from_fn(|_| rng.gen_bool(0.3))))
            .collect();
        for kind in ModelKind::ALL {
            let m = train(&d, kind.default_hyperparams()).unwrap();
            let path = dir.path().join(format!("{kind}.model"));
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m);
            for fv in &probes {
                let (a, b) = (m.predict(fv), back.predict(fv));
                assert_eq!(a.label, b.label);
                assert_eq!(a.score.to_bits(), b.score.to_bits());
            }
        }
    }

    #[test]
    fn truncation_and_tampering_are_detected() {
        let d = synthesize_fixture(10, 10, 1).unwrap();
        let m = train(&d, ModelKind::Nb.default_hyperparams()).unwrap();
        let bytes = to_bytes(&m);
        for cut in [bytes.len() - 2, bytes.len() / 2, 40] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(ModelIoError::Checksum)), "cut {cut}");
        }
        let mut tampered = bytes.clone();
        let pos = bytes.len() - 10;
        tampered[pos] = if tampered[pos] == b'1' { b'2' } else { b'1' };
        assert!(matches!(from_bytes(&tampered), Err(ModelIoError::Checksum)));
        assert!(matches!(from_bytes(b"{}"), Err(ModelIoError::BadMagic)));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let body = r#"{"format_version":2}"#;
        let file = format!("{MAGIC}\nsha256:{}\n{body}\n", hex::encode(Sha256::digest(body)));
        assert!(matches!(from_bytes(file.as_bytes()), Err(ModelIoError::Version(2))));
    }

    #[test]
    fn hyperparameters_are_recorded() {
        let d = synthesize_fixture(10, 10, 1).unwrap();
        let a = train(&d, Hyperparams::Nb { alpha: 1.0 }).unwrap();
        let b = train(&d, Hyperparams::Nb { alpha: 0.5 }).unwrap();
        let (ba, bb) = (to_bytes(&a), to_bytes(&b));
        assert_ne!(ba, bb);
        assert_eq!(from_bytes(&bb).unwrap().meta.hyperparams, Hyperparams::Nb { alpha: 0.5 });
    }
}
