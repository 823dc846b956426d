use std::path::Path;

use super::ResidualModel;
use crate::features::FEATURE_SCHEMA_VERSION;
use crate::{Error, Result};

pub fn save_model(model: &ResidualModel, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(model).map_err(|e| Error::CorruptFile(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ResidualModel> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::CorruptFile("missing schema_version".into()))?;
    if found != FEATURE_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch {
            expected: FEATURE_SCHEMA_VERSION.to_string(),
            found: found.to_string(),
        });
    }
    let model: ResidualModel = serde_json::from_value(value).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let d = model.theta.len();
    if model.standardizer.mean.len() != d || model.standardizer.sd.len() != d {
        return Err(Error::CorruptFile("standardizer length differs from theta".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Standardizer};
    use crate::risk_model::AnchorMode;
    use crate::rng::seeded;
    use rand::Rng;

    fn model() -> ResidualModel {
        let mut rng = seeded(77);
        let d = 13;
        let mut m = ResidualModel::baseline(
            Standardizer {
                mean: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                sd: (0..d).map(|_| rng.random_range(0.1..3.0)).collect(),
            },
            AnchorMode::Free,
            0.3,
            1.33,
        );
        m.theta = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        m.bias = -0.123_456_789_012_345_67;
        m.anchor_coef = 0.913_579_246_801_357_9;
        m.lambda2 = 0.1;
        m
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = seeded(78);
        for _ in 0..100 {
            let x = FeatureVector((0..13).map(|_| rng.random_range(-3.0..3.0)).collect());
            let z = rng.random_range(-6.0..6.0);
            let (a, b) = (m.predict(z, &x).unwrap(), back.predict(z, &x).unwrap());
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = model();
        m.schema_version = "uccap-features-v0".into();
        save_model(&m, &path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::SchemaVersionMismatch { .. })));
    }
}
