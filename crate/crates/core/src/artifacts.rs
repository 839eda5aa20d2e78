//! Files produced by tools: query results, figures, sandbox outputs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A directory of tool artifacts with collision-free naming.
///
/// Names are UUIDs drawn from a ChaCha stream. A seeded store produces the
/// same name sequence on every run, which keeps scripted replays byte-stable;
/// the default store seeds from the OS.
#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    rng: Mutex<ChaCha20Rng>,
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        Self::with_rng(dir.into(), ChaCha20Rng::from_os_rng())
    }

    pub fn seeded(dir: impl Into<PathBuf>, seed: u64) -> io::Result<Self> {
        Self::with_rng(dir.into(), ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(dir: PathBuf, rng: ChaCha20Rng) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            rng: Mutex::new(rng),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// A fresh `<uuid>.<ext>` file name.
    pub fn fresh_name(&self, ext: &str) -> String {
        let mut bytes = [0u8; 16];
        self.rng.lock().fill_bytes(&mut bytes);
        let id = uuid::Builder::from_random_bytes(bytes).into_uuid();
        format!("{}.{ext}", id.hyphenated())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn read(&self, name: &str) -> io::Result<Vec<u8>> {
        if !is_plain_name(name) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("invalid artifact name {name:?}"),
            ));
        }
        fs::read(self.path(name))
    }
}

/// True for a single path component with no traversal.
pub fn is_plain_name(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\'])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_names_repeat_and_differ_within_a_run() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactStore::seeded(dir.path(), 7).unwrap();
        let b = ArtifactStore::seeded(dir.path(), 7).unwrap();
        let first = a.fresh_name("csv");
        assert_eq!(first, b.fresh_name("csv"));
        assert_ne!(first, a.fresh_name("csv"));
        assert!(first.ends_with(".csv"));
        assert_eq!(first.len(), 36 + 4);
    }

    #[test]
    fn rejects_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        assert!(store.read("../etc/passwd").is_err());
        assert!(!is_plain_name(".."));
        assert!(is_plain_name("abc.png"));
    }
}
