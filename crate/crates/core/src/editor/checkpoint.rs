use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{DocParams, EncoderConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::EditorParams;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Editor parameters together with the encoder they were trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EditorParams,
    pub encoder: EncoderConfig,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    m: usize,
    n: usize,
    #[serde(rename = "W_c")]
    w_c: Matrix,
    b_c: Vec<f64>,
    #[serde(rename = "V")]
    v: Matrix,
    b: Vec<f64>,
    #[serde(rename = "W_g")]
    w_g: Matrix,
    #[serde(rename = "W_d")]
    w_d: Matrix,
    b_d: Vec<f64>,
    encoder: EncoderConfig,
}

impl Checkpoint {
    pub fn new(params: EditorParams, encoder: EncoderConfig) -> Result<Checkpoint> {
        let ck = Checkpoint { params, encoder };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        self.params.check().map_err(|e| Error::Checkpoint(e.to_string()))?;
        self.encoder.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.encoder.n != self.params.n {
            return Err(Error::Checkpoint(format!(
                "encoder width {} does not match editor width {}",
                self.encoder.n, self.params.n
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let p = self.params.clone();
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            m: p.m,
            n: p.n,
            w_c: p.w_c,
            b_c: p.b_c,
            v: p.v,
            b: p.b,
            w_g: p.w_g,
            w_d: p.doc.w_d,
            b_d: p.doc.b_d,
            encoder: self.encoder,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
        }
        let params = EditorParams {
            m: file.m,
            n: file.n,
            w_c: file.w_c,
            b_c: file.b_c,
            v: file.v,
            b: file.b,
            w_g: file.w_g,
            doc: DocParams {
                w_d: file.w_d,
                b_d: file.b_d,
            },
        };
        Checkpoint::new(params, file.encoder)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(n: usize) -> EncoderConfig {
        EncoderConfig {
            n,
            hash_seed: 3,
            context_window: 1,
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ck = Checkpoint::new(EditorParams::init(3, 4, 8), enc(4)).unwrap();
        let text = ck.to_json().unwrap();
        assert!(text.starts_with("{\"version\":1,\"m\":3,\"n\":4,\"W_c\":[["));
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let ck = Checkpoint::new(EditorParams::init(2, 2, 1), enc(2)).unwrap();
        let text = ck.to_json().unwrap().replace("\"version\":1", "\"version\":2");
        assert!(Checkpoint::from_json(&text).is_err());
        let text = ck.to_json().unwrap().replace("\"m\":2", "\"m\":3");
        assert!(Checkpoint::from_json(&text).is_err());
        assert!(Checkpoint::new(EditorParams::init(2, 2, 1), enc(3)).is_err());
    }
}
