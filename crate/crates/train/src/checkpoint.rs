//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `MITL`, version `u16`, layer count `u32`,
//! `layers + 1` widths as `u32`, one activation tag `u8` per layer,
//! parameter count `u64`, the parameters as `f64`, step `u64`, then the RNG
//! snapshot (32-byte seed, `u64` stream, `u128` word position). A JSON
//! sidecar next to the file carries the config fingerprint.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::mlp::{Activation, ArchDescriptor, Mlp};

pub const MAGIC: &[u8; 4] = b"MITL";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchDescriptor,
    pub params: Vec<f64>,
    pub step: u64,
    pub rng: RngSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fingerprint: String,
    pub format_version: u16,
    pub param_count: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_model(model: &Mlp, step: u64, rng: &ChaCha8Rng) -> Self {
        Self {
            arch: model.arch(),
            params: model.flat_params(),
            step,
            rng: RngSnapshot::capture(rng),
        }
    }

    pub fn model(&self) -> Result<Mlp, TrainError> {
        Mlp::from_flat(&self.arch, &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arch.layer_count() as u32).to_le_bytes());
        for &d in &self.arch.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for a in &self.arch.activations {
            out.push(a.tag());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(TrainError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(TrainError::Format(format!("unsupported version {version}")));
        }
        let layers = u32::from_le_bytes(r.array()?) as usize;
        let dims = (0..=layers)
            .map(|_| r.array().map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let activations = (0..layers)
            .map(|_| {
                let [t] = r.array()?;
                Activation::from_tag(t).ok_or_else(|| TrainError::Format(format!("activation tag {t}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let arch = ArchDescriptor { dims, activations };
        arch.validate()?;
        let count = u64::from_le_bytes(r.array()?) as usize;
        if count != arch.param_count() {
            return Err(TrainError::Format(format!(
                "{count} parameters for an architecture with {}",
                arch.param_count()
            )));
        }
        let params = (0..count)
            .map(|_| r.array().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>, _>>()?;
        let step = u64::from_le_bytes(r.array()?);
        let seed = r.array()?;
        let stream = u64::from_le_bytes(r.array()?);
        let word_pos = u128::from_le_bytes(r.array()?);
        if r.pos != bytes.len() {
            return Err(TrainError::Format("trailing bytes".into()));
        }
        Ok(Self {
            arch,
            params,
            step,
            rng: RngSnapshot { seed, stream, word_pos },
        })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    /// Writes the binary and its sidecar, each through a temp file and rename.
    pub fn save(&self, path: &Path, fingerprint: &str) -> Result<(), TrainError> {
        write_atomic(path, &self.to_bytes())?;
        let sidecar = Sidecar {
            fingerprint: fingerprint.to_string(),
            format_version: VERSION,
            param_count: self.params.len() as u64,
            step: self.step,
        };
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        write_atomic(&Self::sidecar_path(path), text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn load_sidecar(path: &Path) -> Result<Sidecar, TrainError> {
        Ok(serde_json::from_slice(&fs::read(Self::sidecar_path(path))?)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(TrainError::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TrainError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| TrainError::Format(format!("no file name in {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample() -> Checkpoint {
        let arch = ArchDescriptor::mlp(3, &[4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Mlp::new(&arch, &mut rng).unwrap();
        let _: u64 = rng.random();
        Checkpoint::from_model(&model, 17, &rng)
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            back.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            c.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rng_snapshot_resumes_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let _: [u64; 3] = rng.random();
        let snap = RngSnapshot::capture(&rng);
        let next: u64 = rng.random();
        assert_eq!(snap.restore().random::<u64>(), next);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
