//! Content-addressed result store.
//!
//! An entry lives in `<root>/<key[..2]>/<key>/` as `entry.json` next to
//! `entry.sha256`, the digest of the JSON bytes. A digest mismatch or an
//! unreadable entry is reported as corrupt, and the caller recomputes and
//! overwrites it.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub result: serde_json::Value,
    /// File name to contents.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug)]
pub enum Lookup {
    Hit(Entry),
    Miss,
    Corrupt(String),
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a JSON description of a run.
pub fn key(description: &serde_json::Value) -> String {
    digest(&serde_json::to_vec(description).expect("JSON values serialize"))
}

pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn dir(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(key)
    }

    pub fn load(&self, key: &str) -> Lookup {
        let dir = self.dir(key);
        let body = match fs::read(dir.join("entry.json")) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Lookup::Miss,
            Err(e) => return Lookup::Corrupt(e.to_string()),
        };
        let stored = match fs::read_to_string(dir.join("entry.sha256")) {
            Ok(s) => s,
            Err(e) => return Lookup::Corrupt(format!("digest unreadable: {e}")),
        };
        if stored.trim() != digest(&body) {
            return Lookup::Corrupt("digest mismatch".into());
        }
        match serde_json::from_slice(&body) {
            Ok(entry) => Lookup::Hit(entry),
            Err(e) => Lookup::Corrupt(e.to_string()),
        }
    }

    pub fn store(&self, key: &str, entry: &Entry) -> io::Result<PathBuf> {
        let dir = self.dir(key);
        fs::create_dir_all(&dir)?;
        let body = serde_json::to_vec(entry).map_err(io::Error::other)?;
        write_atomic(&dir.join("entry.json"), &body)?;
        write_atomic(&dir.join("entry.sha256"), digest(&body).as_bytes())?;
        Ok(dir)
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir(key).join("entry.json")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry() -> Entry {
        Entry { result: serde_json::json!({"value": 1.5}), artifacts: BTreeMap::from([("a.csv".into(), "x\n".into())]) }
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let k = key(&serde_json::json!({"run": 1}));
        assert!(matches!(cache.load(&k), Lookup::Miss));
        cache.store(&k, &entry()).unwrap();
        match cache.load(&k) {
            Lookup::Hit(e) => assert_eq!(e, entry()),
            other => panic!("{other:?}"),
        }
        let p = cache.entry_path(&k);
        let body = fs::read(&p).unwrap();
        fs::write(&p, &body[..body.len() / 2]).unwrap();
        assert!(matches!(cache.load(&k), Lookup::Corrupt(_)));
    }

    #[test]
    fn keys_depend_on_every_field() {
        let a = key(&serde_json::json!({"seed": 1, "cmd": "x"}));
        let b = key(&serde_json::json!({"seed": 2, "cmd": "x"}));
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
    }
}
