//! Model checkpoints: versioned JSON holding the model config, the
//! vocabulary and every parameter array, guarded by a SHA-256 checksum.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spattn_core::model::{ModelConfig, ModelParams};

pub const FORMAT: &str = "spattn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub model: ModelConfig,
    pub vocab: Vec<String>,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    sha256: String,
    body: Body,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn checksum(body: &Body) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(body)?.as_bytes()))
}

pub fn save(path: &Path, body: &Body) -> Result<()> {
    let file = File { format: FORMAT.into(), version: VERSION, sha256: checksum(body)?, body: body.clone() };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string(&file)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Body> {
    let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let file: File = serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
    if file.format != FORMAT || file.version != VERSION {
        bail!("{}: unsupported checkpoint {} v{}", path.display(), file.format, file.version);
    }
    if checksum(&file.body)? != file.sha256 {
        bail!("{}: checksum mismatch", path.display());
    }
    ModelParams::init(&file.body.model)?.check_compatible(&file.body.params)?;
    Ok(file.body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spattn_core::model::{AlignmentKind, EncoderKind};
    use spattn_core::ProjectionKind;

    fn body() -> Body {
        let model = ModelConfig::desk(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::sparsegen(-2.0).unwrap(), 7)
            .with_dims(4, 4, 4)
            .with_seed(5);
        let params = ModelParams::init(&model).unwrap();
        Body { model, vocab: (0..7).map(|i| i.to_string()).collect(), params }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let b = body();
        save(&path, &b).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, b);
        for ((x, _), (y, _)) in back.params.tensors().iter().zip(b.params.tensors()) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save(&path, &body()).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("\"seed\":5", "\"seed\":6", 1);
        fs::write(&path, text).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("checksum"));
    }
}
