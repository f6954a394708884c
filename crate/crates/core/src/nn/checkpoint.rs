//! Parameter checkpoints.
//!
//! A checkpoint is a sequence of sections. Each section is one line of JSON
//! (`{"manifest":[...],"d":N,"seed":S, ...}` terminated by `\n`) followed by
//! exactly `d` little-endian IEEE-754 `f64` values. Single-network files hold
//! one section; composite models (the embedding network, the agent) write one
//! section per sub-network, told apart by the optional `name` field.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{param_count, FlatParams, LayerSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub manifest: Vec<LayerSpec>,
    pub d: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub header: CheckpointHeader,
    pub params: FlatParams,
}

impl Section {
    pub fn new(name: &str, params: FlatParams, seed: u64) -> Self {
        Self {
            header: CheckpointHeader {
                name: Some(name.to_owned()),
                manifest: params.manifest().to_vec(),
                d: params.d(),
                seed,
                meta: None,
            },
            params,
        }
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.header.meta = Some(meta);
        self
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, sections: &[Section]) -> Result<()> {
    for s in sections {
        let line = serde_json::to_string(&s.header)
            .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(s.params.d() * 8);
        for v in s.params.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<Section>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("header line not terminated".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[pos..pos + nl])
            .map_err(|e| Error::Checkpoint(format!("header decode: {e}")))?;
        pos += nl + 1;
        if param_count(&header.manifest) != header.d {
            return Err(Error::Checkpoint(format!(
                "header d = {} but manifest implies {}",
                header.d,
                param_count(&header.manifest)
            )));
        }
        let need = header.d * 8;
        if bytes.len() - pos < need {
            return Err(Error::Checkpoint(format!(
                "payload truncated: need {need} bytes, have {}",
                bytes.len() - pos
            )));
        }
        let values = bytes[pos..pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        pos += need;
        let params = FlatParams::new(header.manifest.clone(), values)?;
        out.push(Section { header, params });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain, Activation};

    #[test]
    fn roundtrip_multi_section() {
        let a =
            FlatParams::init(chain(&[3, 4, 2], Activation::Relu, Activation::Softmax), 5).unwrap();
        let b =
            FlatParams::init(chain(&[2, 1], Activation::Relu, Activation::Identity), 6).unwrap();
        let sections = vec![
            Section::new("a", a, 5),
            Section::new("b", b, 6).with_meta(serde_json::json!({"log_alpha": -1.5})),
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sections).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, sections);
    }

    #[test]
    fn header_is_a_json_line_then_le_f64() {
        let p = FlatParams::new(
            vec![LayerSpec::new(1, 1, Activation::Identity)],
            vec![1.0, -2.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[Section::new("x", p, 3)]).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(header["d"], 2);
        assert_eq!(header["seed"], 3);
        assert_eq!(header["manifest"][0]["activation"], "identity");
        assert_eq!(&buf[nl + 1..nl + 9], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), nl + 1 + 16);
    }

    #[test]
    fn truncated_payload_rejected() {
        let p =
            FlatParams::init(chain(&[3, 2], Activation::Relu, Activation::Identity), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[Section::new("x", p, 1)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
