//! Little-endian binary artifact formats.
//!
//! Every file starts with a 4-byte magic and a `u32` format version.
//!
//! * `.lds` dataset: `K: u32, d: u32, n: u64`, then `n·d` `f32` features
//!   (row-major) and `n` `u16` labels.
//! * `.enc` encoder: a `u8` kind tag followed by kind-specific `u32` shapes
//!   and `f64` parameters.
//! * `.dmc` diffusion checkpoint: denoiser shape, the β schedule, epochs
//!   trained, network parameters and the class table, all parameters `f64`.
//!
//! Files are consumed exactly: trailing bytes are an error.

use std::path::Path;

use pruneweight_core::dataset::LabeledDataset;
use pruneweight_core::diffusion::{DenoiserConfig, DenoiserModel, NoiseSchedule};
use pruneweight_core::encoder::{ClassifierEncoder, Encoder, PcaEncoder};
use pruneweight_core::nn::Mlp;
use pruneweight_core::numerics::Matrix;

use crate::error::{CliError, FormatError};

pub const DATASET_MAGIC: [u8; 4] = *b"PWDS";
pub const ENCODER_MAGIC: [u8; 4] = *b"PWEN";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PWDM";
pub const DATASET_VERSION: u32 = 1;
pub const ENCODER_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_IDENTITY: u8 = 0;
const KIND_PCA: u8 = 1;
const KIND_CLASSIFIER: u8 = 2;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn header(magic: [u8; 4], version: u32) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(&magic);
        w.u32(version);
        w
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("shape fits in u32"));
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: [u8; 4], version: u32) -> Result<Self, FormatError> {
        if buf.is_empty() {
            return Err(FormatError::Empty);
        }
        let mut r = Self { buf, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let v = r.u32()?;
        if v != version {
            return Err(FormatError::Version {
                found: v,
                supported: version,
            });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, FormatError> {
        Ok(self.u32()? as usize)
    }

    /// `count` values of `width` bytes, checking the size before allocating.
    fn block(&mut self, count: usize, width: usize) -> Result<&'a [u8], FormatError> {
        let bytes = count.checked_mul(width).ok_or(FormatError::Invalid("size overflow".into()))?;
        self.take(bytes)
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        Ok(self
            .block(count, 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(FormatError::TrailingBytes(extra)),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> FormatError {
    FormatError::Invalid(e.to_string())
}

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let mut w = Writer::header(DATASET_MAGIC, DATASET_VERSION);
    w.len(ds.classes());
    w.len(ds.dim());
    w.u64(ds.len() as u64);
    for &x in ds.features() {
        w.buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    for &l in ds.labels() {
        w.buf.extend_from_slice(&(l as u16).to_le_bytes());
    }
    w.buf
}

pub fn decode_dataset(buf: &[u8], name: &str) -> Result<LabeledDataset, FormatError> {
    let mut r = Reader::open(buf, DATASET_MAGIC, DATASET_VERSION)?;
    let k = r.len()?;
    let d = r.len()?;
    let n = usize::try_from(r.u64()?).map_err(invalid)?;
    if k == 0 || k > u16::MAX as usize || d == 0 {
        return Err(FormatError::Invalid(format!("bad header: K = {k}, d = {d}")));
    }
    let count = n.checked_mul(d).ok_or(FormatError::Invalid("size overflow".into()))?;
    let features: Vec<f64> = r
        .block(count, 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let labels: Vec<usize> = r
        .block(n, 2)?
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().expect("2 bytes")) as usize)
        .collect();
    r.finish()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(FormatError::Invalid(format!("label {bad} out of range for {k} classes")));
    }
    LabeledDataset::new(name, k, d, features, labels).map_err(invalid)
}

pub fn encode_encoder(enc: &Encoder) -> Vec<u8> {
    let mut w = Writer::header(ENCODER_MAGIC, ENCODER_VERSION);
    match enc {
        Encoder::Identity { dim } => {
            w.u8(KIND_IDENTITY);
            w.len(*dim);
        }
        Encoder::Pca(p) => {
            w.u8(KIND_PCA);
            w.len(p.mean().len());
            w.len(p.components());
            w.f64s(p.mean());
            w.f64s(p.axes().as_slice());
            w.f64s(p.explained_variance());
        }
        Encoder::Classifier(c) => {
            w.u8(KIND_CLASSIFIER);
            let sizes = c.network().sizes();
            w.len(sizes.len());
            sizes.iter().for_each(|&s| w.len(s));
            w.u64(c.epochs_trained() as u64);
            w.f64s(&[c.train_accuracy()]);
            w.f64s(c.network().params());
        }
    }
    w.buf
}

pub fn decode_encoder(buf: &[u8]) -> Result<Encoder, FormatError> {
    let mut r = Reader::open(buf, ENCODER_MAGIC, ENCODER_VERSION)?;
    let enc = match r.u8()? {
        KIND_IDENTITY => Encoder::identity(r.len()?),
        KIND_PCA => {
            let d = r.len()?;
            let k = r.len()?;
            let mean = r.f64s(d)?;
            let axes = Matrix::from_vec(k, d, r.f64s(k.checked_mul(d).ok_or(invalid("size overflow"))?)?).map_err(invalid)?;
            let explained = r.f64s(k)?;
            Encoder::Pca(PcaEncoder::from_parts(mean, axes, explained).map_err(invalid)?)
        }
        KIND_CLASSIFIER => {
            let layers = r.len()?;
            if layers > 64 {
                return Err(invalid("implausible layer count"));
            }
            let sizes: Vec<usize> = (0..layers).map(|_| r.len()).collect::<Result<_, _>>()?;
            let epochs = usize::try_from(r.u64()?).map_err(invalid)?;
            let acc = r.f64s(1)?[0];
            let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            let net = Mlp::from_params(sizes, r.f64s(count)?).map_err(invalid)?;
            Encoder::Classifier(ClassifierEncoder::from_parts(net, epochs, acc).map_err(invalid)?)
        }
        other => return Err(FormatError::Invalid(format!("unknown encoder kind {other}"))),
    };
    r.finish()?;
    Ok(enc)
}

/// A denoiser with its noise schedule and training progress.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserModel,
    pub schedule: NoiseSchedule,
    pub epochs_trained: usize,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    let cfg = ck.model.config();
    w.len(cfg.dim);
    w.len(cfg.classes);
    w.len(cfg.time_dim);
    w.len(cfg.class_dim);
    w.len(cfg.hidden.len());
    cfg.hidden.iter().for_each(|&h| w.len(h));
    w.len(ck.schedule.steps());
    w.f64s(ck.schedule.betas());
    w.u64(ck.epochs_trained as u64);
    w.f64s(ck.model.net_params());
    w.f64s(ck.model.class_table());
    w.buf
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::open(buf, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let dim = r.len()?;
    let classes = r.len()?;
    let time_dim = r.len()?;
    let class_dim = r.len()?;
    let layers = r.len()?;
    if layers > 64 {
        return Err(invalid("implausible layer count"));
    }
    let hidden: Vec<usize> = (0..layers).map(|_| r.len()).collect::<Result<_, _>>()?;
    let cfg = DenoiserConfig {
        dim,
        classes,
        hidden,
        time_dim,
        class_dim,
    };
    cfg.validate().map_err(invalid)?;
    let steps = r.len()?;
    let schedule = NoiseSchedule::from_betas(r.f64s(steps)?).map_err(invalid)?;
    let epochs_trained = usize::try_from(r.u64()?).map_err(invalid)?;
    let mut sizes = vec![dim + time_dim + class_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(dim);
    let net_count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let net = r.f64s(net_count)?;
    let table = r.f64s((classes + 1) * class_dim)?;
    r.finish()?;
    let model = DenoiserModel::from_parts(cfg, net, table).map_err(invalid)?;
    Ok(Checkpoint {
        model,
        schedule,
        epochs_trained,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn format_err(path: &Path) -> impl FnOnce(FormatError) -> CliError + '_ {
    move |source| CliError::Format {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn save_dataset(path: &Path, ds: &LabeledDataset) -> Result<(), CliError> {
    write_bytes(path, &encode_dataset(ds))
}

/// The dataset name is taken from the file stem.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    decode_dataset(&read_bytes(path)?, name).map_err(format_err(path))
}

pub fn save_encoder(path: &Path, enc: &Encoder) -> Result<(), CliError> {
    write_bytes(path, &encode_encoder(enc))
}

pub fn load_encoder(path: &Path) -> Result<Encoder, CliError> {
    decode_encoder(&read_bytes(path)?).map_err(format_err(path))
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CliError> {
    write_bytes(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    decode_checkpoint(&read_bytes(path)?).map_err(format_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pruneweight_core::dataset::{generate, DatasetSpec, Generator};
    use pruneweight_core::encoder::{pca_encoder, train_classifier, ClassifierConfig};

    fn mixture() -> LabeledDataset {
        generate(&DatasetSpec {
            generator: Generator::GaussianMixture,
            classes: 3,
            per_class: 20,
            dim: 4,
            seed: 2,
        })
        .unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        for generator in [Generator::GaussianMixture, Generator::RingMixture, Generator::SpriteImages] {
            let ds = generate(&DatasetSpec {
                generator,
                classes: 3,
                per_class: 7,
                dim: 3,
                seed: 9,
            })
            .unwrap();
            let back = decode_dataset(&encode_dataset(&ds), ds.name()).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn dataset_format_guards() {
        let ds = mixture();
        let bytes = encode_dataset(&ds);
        assert!(matches!(decode_dataset(&[], "x"), Err(FormatError::Empty)));
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1], "x"), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_dataset(&bytes[..10], "x"), Err(FormatError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_dataset(&extra, "x"), Err(FormatError::TrailingBytes(1))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_dataset(&magic, "x"), Err(FormatError::BadMagic { .. })));
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(decode_dataset(&version, "x"), Err(FormatError::Version { found: 9, .. })));
        let mut label = bytes;
        let n = label.len();
        label[n - 2..].copy_from_slice(&3u16.to_le_bytes());
        assert!(matches!(decode_dataset(&label, "x"), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn encoder_round_trips() {
        let ds = mixture();
        let cfg = ClassifierConfig {
            epochs: 3,
            ..ClassifierConfig::default()
        };
        for enc in [
            Encoder::identity(4),
            Encoder::Pca(pca_encoder(&ds, 2).unwrap()),
            Encoder::Classifier(train_classifier(&ds, &cfg).unwrap()),
        ] {
            let back = decode_encoder(&encode_encoder(&enc)).unwrap();
            assert_eq!(back, enc);
            assert_eq!(back.id(), enc.id());
        }
    }

    #[test]
    fn checkpoint_round_trip_and_version_guard() {
        let mut cfg = DenoiserConfig::new(2, 3);
        cfg.hidden = vec![8, 4];
        let ck = Checkpoint {
            model: DenoiserModel::new(cfg, 5).unwrap(),
            schedule: NoiseSchedule::desk_default(),
            epochs_trained: 12,
        };
        let bytes = encode_checkpoint(&ck);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
        let mut old = bytes;
        old[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_checkpoint(&old), Err(FormatError::Version { found: 0, .. })));
    }
}
