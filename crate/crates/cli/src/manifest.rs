//! `MANIFEST`: per-stage status plus a checksum of every output file, so a
//! reader can tell a complete run from a partial one.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;

use crate::checkpoint::sha256_hex;

pub const FILE: &str = "MANIFEST";

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Manifest {
    pub stages: Vec<(String, String)>,
}

impl Manifest {
    /// Stage statuses from an existing MANIFEST, or none.
    pub fn load(dir: &Path) -> Result<Self> {
        let Ok(text) = fs::read_to_string(dir.join(FILE)) else { return Ok(Manifest::default()) };
        let stages = text
            .lines()
            .filter_map(|l| l.strip_prefix("stage "))
            .filter_map(|l| l.split_once(' '))
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        Ok(Manifest { stages })
    }

    pub fn set(&mut self, stage: &str, status: &str) {
        match self.stages.iter_mut().find(|(s, _)| s == stage) {
            Some(entry) => entry.1 = status.to_string(),
            None => self.stages.push((stage.to_string(), status.to_string())),
        }
    }

    pub fn complete(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(|(_, s)| s == "ok")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut out = String::from("spattn-manifest 1\n");
        out.push_str(if self.complete() { "status complete\n" } else { "status partial\n" });
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        out.push_str(&format!("written_unix {now}\n"));
        for (s, status) in &self.stages {
            out.push_str(&format!("stage {s} {status}\n"));
        }
        let mut files = Vec::new();
        collect(dir, dir, &mut files)?;
        files.sort();
        for rel in files {
            let bytes = fs::read(dir.join(&rel))?;
            out.push_str(&format!("file {} {} {}\n", rel, bytes.len(), sha256_hex(&bytes)));
        }
        fs::write(dir.join(FILE), out)?;
        Ok(())
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != FILE) {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x\n").unwrap();
        let mut m = Manifest::default();
        m.set("train", "ok");
        m.set("analyze", "failed");
        m.write(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let text = fs::read_to_string(dir.path().join(FILE)).unwrap();
        assert!(text.contains("status partial") && text.contains("file a.csv 2 "));
        m.set("analyze", "ok");
        assert!(m.complete());
    }
}
