//! `PSAM/1` binary model files.
//!
//! Layout: magic `PSAM0001`, a u64 LE header length, the JSON header, then
//! each parameter tensor as `rank: u64`, `dims: [u64; rank]`, `values:
//! [f64; product(dims)]` (all little-endian), and finally a CRC-32C (u32 LE)
//! of every preceding byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpochRecord, InputDescriptor, ModelError, ModelKind, ModelSpec, TrainedModel};
use crate::nn::{LayerSpec, Network, Tensor};

pub const MAGIC: &[u8; 8] = b"PSAM0001";
const FORMAT_NAME: &str = "PSAM/1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a PSAM model file")]
    BadMagic,
    #[error("unsupported model file version {0:?}")]
    VersionUnsupported(String),
    #[error("checksum mismatch (file corrupt or truncated)")]
    ChecksumMismatch,
    #[error("parameter tensors do not match the header: {0}")]
    ShapeHeaderMismatch(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    kind: ModelKind,
    input: InputDescriptor,
    layers: Vec<LayerSpec>,
    num_classes: Option<usize>,
    encoder_layers: usize,
    seed: u64,
    epochs: usize,
    best_epoch: Option<usize>,
    history: Vec<EpochRecord>,
    pretrain_history: Vec<EpochRecord>,
}

pub fn to_bytes(model: &TrainedModel) -> Vec<u8> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        kind: model.spec.kind,
        input: model.spec.input,
        layers: model.spec.layers.clone(),
        num_classes: model.spec.num_classes,
        encoder_layers: model.spec.encoder_layers,
        seed: model.seed,
        epochs: model.history.len(),
        best_epoch: model.best_epoch,
        history: model.history.clone(),
        pretrain_history: model.pretrain_history.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(16 + json.len() + model.network.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.network.parameters() {
        out.extend_from_slice(&(t.rank() as u64).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32c::crc32c(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| FormatError::ShapeHeaderMismatch("parameter data ends early".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize, FormatError> {
        usize::try_from(self.u64()?).map_err(|_| FormatError::ShapeHeaderMismatch("dimension overflows".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel, FormatError> {
    if bytes.len() < MAGIC.len() || !bytes.starts_with(b"PSAM") {
        return Err(FormatError::BadMagic);
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::VersionUnsupported(
            String::from_utf8_lossy(&bytes[4..MAGIC.len()]).into_owned(),
        ));
    }
    if bytes.len() < MAGIC.len() + 8 + 4 {
        return Err(FormatError::ChecksumMismatch);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32c::crc32c(body) != stored {
        return Err(FormatError::ChecksumMismatch);
    }

    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let header_len = r.usize()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| FormatError::Header(e.to_string()))?;
    if header.format != FORMAT_NAME {
        return Err(FormatError::VersionUnsupported(header.format));
    }
    if header.epochs != header.history.len() {
        return Err(FormatError::Header(format!(
            "epoch count {} but {} history records",
            header.epochs,
            header.history.len()
        )));
    }

    let mut params = Vec::new();
    for spec in &header.layers {
        for expected in spec.parameter_shapes() {
            let rank = r.usize()?;
            if rank != expected.len() {
                return Err(FormatError::ShapeHeaderMismatch(format!("rank {rank}, expected {}", expected.len())));
            }
            let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
            if dims != expected {
                return Err(FormatError::ShapeHeaderMismatch(format!("dims {dims:?}, expected {expected:?}")));
            }
            let count: usize = dims.iter().product();
            let raw = r.take(count.checked_mul(8).ok_or_else(|| FormatError::ShapeHeaderMismatch("tensor too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push(Tensor::new(&dims, values).map_err(|e| FormatError::ShapeHeaderMismatch(e.to_string()))?);
        }
    }
    if r.pos != body.len() {
        return Err(FormatError::ShapeHeaderMismatch(format!(
            "{} unexpected bytes after the last tensor",
            body.len() - r.pos
        )));
    }

    let network =
        Network::from_parameters(&header.layers, params).map_err(|e| FormatError::ShapeHeaderMismatch(e.to_string()))?;
    let spec = ModelSpec {
        kind: header.kind,
        input: header.input,
        layers: header.layers,
        num_classes: header.num_classes,
        encoder_layers: header.encoder_layers,
    };
    let mut model = TrainedModel::new(spec, network, header.seed).map_err(|e| match e {
        ModelError::BadDimension(m) => FormatError::Header(m),
        other => FormatError::Header(other.to_string()),
    })?;
    model.history = header.history;
    model.best_epoch = header.best_epoch;
    model.pretrain_history = header.pretrain_history;
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_autoencoder, build_cnn_with, build_mlp, predict, AutoencoderShape, CnnShape};
    use crate::rng::SeededRng;

    fn sample_model() -> TrainedModel {
        let mut m = build_mlp(4, &[6], 2, 3).unwrap();
        m.history = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.1 + 0.2,
            valid_loss: Some(1.0 / 3.0),
            valid_accuracy: None,
        }];
        m.best_epoch = Some(1);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = SeededRng::new(0);
        let probes = Tensor::new(&[64, 4], (0..256).map(|_| rng.symmetric(2.0)).collect()).unwrap();
        let m = sample_model();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(predict(&back, &probes).unwrap(), predict(&m, &probes).unwrap());
        assert_eq!(to_bytes(&back), to_bytes(&m));

        for m in [
            build_autoencoder(3, &AutoencoderShape::scaled(100), 1).unwrap(),
            build_cnn_with(31, 2, 2, &CnnShape { dense: vec![3], ..CnnShape::reference() }, 1).unwrap(),
        ] {
            assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
        }
    }

    #[test]
    fn layout_starts_with_magic_and_length() {
        let bytes = to_bytes(&sample_model());
        assert_eq!(&bytes[..8], b"PSAM0001");
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["format"], "PSAM/1");
        assert_eq!(header["kind"], "mlp");
        assert_eq!(header["epochs"], 1);
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32c::crc32c(&bytes[..bytes.len() - 4]));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = to_bytes(&sample_model());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 9]), Err(FormatError::ChecksumMismatch)));
        assert!(matches!(from_bytes(&bytes[..10]), Err(FormatError::ChecksumMismatch)));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(from_bytes(&flipped), Err(FormatError::ChecksumMismatch)));
        assert!(matches!(from_bytes(b"XXXX"), Err(FormatError::BadMagic)));
        assert!(matches!(from_bytes(b""), Err(FormatError::BadMagic)));
        let mut v2 = bytes;
        v2[..8].copy_from_slice(b"PSAM0002");
        assert!(matches!(from_bytes(&v2), Err(FormatError::VersionUnsupported(v)) if v == "0002"));
    }

    fn reseal(mut body: Vec<u8>) -> Vec<u8> {
        let crc = crc32c::crc32c(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    }

    #[test]
    fn header_and_tensors_must_agree() {
        let bytes = to_bytes(&sample_model());
        let body = &bytes[..bytes.len() - 4];
        let len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&body[16..16 + len]).unwrap();

        let edited = header.replace("\"outputs\":6", "\"outputs\":7").replace("\"inputs\":6", "\"inputs\":7");
        assert_eq!(edited.len(), header.len());
        let mut forged = body[..16].to_vec();
        forged.extend_from_slice(edited.as_bytes());
        forged.extend_from_slice(&body[16 + len..]);
        assert!(matches!(from_bytes(&reseal(forged)), Err(FormatError::ShapeHeaderMismatch(_))));

        let mut extra = body.to_vec();
        extra.extend_from_slice(&[0; 8]);
        assert!(matches!(from_bytes(&reseal(extra)), Err(FormatError::ShapeHeaderMismatch(_))));

        let short = body[..body.len() - 8].to_vec();
        assert!(matches!(from_bytes(&reseal(short)), Err(FormatError::ShapeHeaderMismatch(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.psam");
        save_model(&sample_model(), &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), sample_model());
        assert!(matches!(load_model(dir.path().join("missing")), Err(FormatError::Io { .. })));
    }
}
