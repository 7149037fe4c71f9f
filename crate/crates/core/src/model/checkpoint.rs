//! Binary checkpoint format for training state.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  b"CLCK"
//! version          u32      currently 1
//! config text      u64 byte length, then UTF-8 bytes
//! array count      u64
//! per array:
//!   name           u64 byte length, then UTF-8 bytes
//!   values         u64 element count, then that many f64
//! step             u64
//! best_val_loss    f64
//! rng_seed         32 bytes
//! rng_word_pos     u128     16 bytes
//! ```
//!
//! The file must end exactly after `rng_word_pos`; trailing bytes are an
//! error. The config text is stored verbatim so that resuming a run can
//! insist on an exact settings match, and reading it back never reformats
//! or reorders it.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CLCK";
pub const VERSION: u32 = 1;

/// Everything needed to resume training bit-exactly: parameters, optimizer
/// moments, the data RNG position, and the settings text the run started
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    /// Named arrays in a fixed order: parameter blocks first, then their
    /// first-moment (`m_` prefix) and second-moment (`v_` prefix) estimates.
    pub arrays: Vec<(String, Vec<f64>)>,
    pub step: u64,
    pub best_val_loss: f64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        write_bytes(&mut out, self.config_text.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, values) in &self.arrays {
            write_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.best_val_loss.to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.err(format!("bad magic {magic:02x?}, expected {MAGIC:02x?}")));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}, expected {VERSION}")));
        }
        let config_text = r.string("config text")?;
        let n_arrays = r.u64("array count")?;
        let mut arrays = Vec::new();
        for i in 0..n_arrays {
            let name = r.string(&format!("name of array {i}"))?;
            let len = r.u64(&format!("length of array {name:?}"))?;
            let need = (len as usize).checked_mul(8).ok_or_else(|| {
                r.err(format!("array {name:?} length {len} overflows"))
            })?;
            let raw = r.take_named(need, &format!("data of array {name:?}"))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((name, values));
        }
        let step = r.u64("step")?;
        let best_val_loss = f64::from_le_bytes(r.take_named(8, "best_val_loss")?.try_into().unwrap());
        let rng_seed: [u8; 32] = r.take_named(32, "rng_seed")?.try_into().unwrap();
        let rng_word_pos = u128::from_le_bytes(r.take_named(16, "rng_word_pos")?.try_into().unwrap());
        if r.pos != bytes.len() {
            return Err(r.err(format!("{} trailing bytes after end of data", bytes.len() - r.pos)));
        }
        Ok(Self { config_text, arrays, step, best_val_loss, rng_seed, rng_word_pos })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write to a sibling temp file and rename so a crash mid-write never
        // leaves a truncated checkpoint under the final name.
        let tmp = tmp_path(path);
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: String) -> Error {
        Error::checkpoint(self.origin, format!("at byte {}: {msg}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take_named(n, "field")
    }

    fn take_named(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take_named(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u64(what)? as usize;
        let raw = self.take_named(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|e| self.err(format!("{what} is not UTF-8: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_text: "frame_len = 96\nlearning_rate = 0.0003\n".into(),
            arrays: vec![
                ("gamma".into(), vec![1.0, 0.5, -0.25]),
                ("w1".into(), vec![0.1; 7]),
                ("m_gamma".into(), vec![0.0, 1e-300, f64::MIN_POSITIVE]),
            ],
            step: 1234,
            best_val_loss: 0.07125,
            rng_seed: [7; 32],
            rng_word_pos: (1u128 << 70) + 99,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("test")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes, "re-serialization must be byte-identical");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(!tmp_path(&path).exists(), "temp file must be renamed away");
    }

    #[test]
    fn array_lookup() {
        let ck = sample();
        assert_eq!(ck.array("gamma"), Some(&[1.0, 0.5, -0.25][..]));
        assert!(ck.array("w9").is_none());
    }

    #[test]
    fn corrupt_inputs_are_rejected_with_positions() {
        let good = sample().to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let err = Checkpoint::from_bytes(&bad_magic, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let truncated = &good[..good.len() - 5];
        let err = Checkpoint::from_bytes(truncated, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut trailing = good.clone();
        trailing.push(0);
        let err = Checkpoint::from_bytes(&trailing, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");

        let mut bad_version = good.clone();
        bad_version[4..8].copy_from_slice(&9u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bad_version, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("unsupported version"), "{err}");

        // A huge claimed array length must fail cleanly, not allocate.
        let mut huge = Vec::new();
        huge.extend_from_slice(MAGIC);
        huge.extend_from_slice(&VERSION.to_le_bytes());
        huge.extend_from_slice(&0u64.to_le_bytes()); // empty config
        huge.extend_from_slice(&1u64.to_le_bytes()); // one array
        huge.extend_from_slice(&1u64.to_le_bytes());
        huge.push(b'g');
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        let err = Checkpoint::from_bytes(&huge, Path::new("t")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("overflow") || msg.contains("truncated"), "{msg}");
    }
}
