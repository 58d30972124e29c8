//! Artifact writers. Every file carries the config hash and seed: CSVs on a
//! leading `#` comment line, JSON as top-level fields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Output directory plus the provenance stamped on every file.
#[derive(Clone, Debug)]
pub struct Sink {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: Option<u64>,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, config_hash: String, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            config_hash,
            seed,
            written: Vec::new(),
        })
    }

    pub fn stamp(&self) -> String {
        match self.seed {
            Some(s) => format!("# config_hash={} seed={s}", self.config_hash),
            None => format!("# config_hash={} seed=none", self.config_hash),
        }
    }

    /// Write a CSV: stamp line, header, then rows.
    pub fn csv<I, S>(&mut self, name: &str, header: &str, rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let path = self.dir.join(name);
        let mut w = std::io::BufWriter::new(
            fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
        );
        writeln!(w, "{}", self.stamp())?;
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{}", r.as_ref())?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Write pretty JSON with `config_hash` and `seed` merged in at top level.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value)?;
        let stamp = json!({ "config_hash": self.config_hash, "seed": self.seed });
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), stamp["config_hash"].clone());
                map.insert("seed".into(), stamp["seed"].clone());
            }
            other => {
                v = json!({ "config_hash": self.config_hash, "seed": self.seed, "data": other.take() });
            }
        }
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Shortest round-trip float text, empty for NaN.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_stamp() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Sink::new(dir.path(), "abc".into(), Some(3)).unwrap();
        let p = s.csv("x.csv", "a,b", ["1,2"]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, "# config_hash=abc seed=3\na,b\n1,2\n");
    }

    #[test]
    fn json_gets_stamp_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Sink::new(dir.path(), "abc".into(), None).unwrap();
        let p = s.json("x.json", &json!({"k": 1})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert!(v["seed"].is_null());
        assert_eq!(v["k"], 1);
        assert_eq!(s.written().len(), 1);
    }
}
