//! Fixed per-entity feature matrices and their binary file format.
//!
//! Layout (little-endian): magic `DSOMFEAT`, `u32` version, `u8` modality tag
//! (0 = visual, 1 = textual), `u64` entity count, `u64` dim, a presence bitmap
//! of `ceil(n / 8)` bytes (bit `i` set = entity `i` present, LSB first), then
//! `n * dim` `f32` values row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Modality;

pub const FEATURE_MAGIC: &[u8; 8] = b"DSOMFEAT";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub modality: Modality,
    pub num_entities: usize,
    pub dim: usize,
    /// Row-major, row `i` = entity `i`.
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl FeatureMatrix {
    /// All rows present.
    pub fn new(modality: Modality, num_entities: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let m = FeatureMatrix {
            modality,
            num_entities,
            dim,
            data,
            mask: vec![true; num_entities],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.modality == Modality::Structural {
            return Err(Error::Shape("feature matrices are visual or textual".into()));
        }
        if self.data.len() != self.num_entities * self.dim || self.mask.len() != self.num_entities {
            return Err(Error::Shape(format!(
                "{} values / {} mask bits for {}x{} features",
                self.data.len(),
                self.mask.len(),
                self.num_entities,
                self.dim
            )));
        }
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
                index,
            });
        }
        for (i, present) in self.mask.iter().enumerate() {
            if !present && self.row(i).iter().any(|&v| v != 0.0) {
                return Err(Error::Shape(format!("missing row {i} is not zero")));
            }
        }
        Ok(())
    }

    pub fn num_present(&self) -> usize {
        self.mask.iter().filter(|&&p| p).count()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let tag = match self.modality {
            Modality::Visual => 0u8,
            _ => 1u8,
        };
        let mut out = Vec::with_capacity(29 + self.num_entities.div_ceil(8) + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.push(tag);
        out.extend_from_slice(&(self.num_entities as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        let mut bitmap = vec![0u8; self.num_entities.div_ceil(8)];
        for (i, &present) in self.mask.iter().enumerate() {
            if present {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bitmap);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "feature file";
        let mut cur = Cursor {
            bytes,
            pos: 0,
            what: WHAT,
        };
        if cur.take(8)? != FEATURE_MAGIC {
            return Err(Error::BadMagic {
                what: WHAT,
                expected: "DSOMFEAT",
            });
        }
        let version = cur.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::Version {
                what: WHAT,
                found: version,
                expected: FEATURE_VERSION,
            });
        }
        let modality = match cur.take(1)?[0] {
            0 => Modality::Visual,
            1 => Modality::Textual,
            t => return Err(Error::Shape(format!("unknown modality tag {t}"))),
        };
        let n = cur.u64()? as usize;
        let dim = cur.u64()? as usize;
        let bitmap = cur.take(n.div_ceil(8))?;
        let mask: Vec<bool> = (0..n).map(|i| bitmap[i / 8] >> (i % 8) & 1 == 1).collect();
        let count = n
            .checked_mul(dim)
            .ok_or_else(|| Error::Shape("n * dim overflows".into()))?;
        let payload = cur.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::Shape("payload overflows".into()))?,
        )?;
        let mut data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: WHAT, index });
        }
        for (i, &present) in mask.iter().enumerate() {
            if !present {
                data[i * dim..(i + 1) * dim].fill(0.0);
            }
        }
        Ok(FeatureMatrix {
            modality,
            num_entities: n,
            dim,
            data,
            mask,
        })
    }
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub what: &'static str,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what: self.what,
                detail: format!("needed {n} bytes at offset {}, have {}", self.pos, self.bytes.len()),
            }),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Shape("length overflows".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    FeatureMatrix::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
}

/// Validates before touching the filesystem, so a bad matrix never leaves a
/// partial file behind.
pub fn write_feature_file(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let bytes = matrix.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Zeroes a uniformly random `floor(rate * n)` subset of rows and clears their
/// presence bits. Rows already missing stay missing.
pub fn apply_missing_mask(matrix: &FeatureMatrix, missing_rate: f64, seed: u64) -> Result<FeatureMatrix> {
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::Config(format!("missing rate {missing_rate} outside [0, 1]")));
    }
    let n = matrix.num_entities;
    let k = ((missing_rate * n as f64).floor() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = matrix.clone();
    for i in sample(&mut rng, n, k) {
        out.mask[i] = false;
        out.data[i * out.dim..(i + 1) * out.dim].fill(0.0);
    }
    Ok(out)
}
