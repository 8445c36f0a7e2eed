use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::HarnessError;

const MANIFEST: &str = "MANIFEST";

/// Directory of finished stages, each stored under a hash of its inputs.
#[derive(Debug, Clone)]
pub struct StageCache {
    root: PathBuf,
}

/// A finished stage on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub stage: String,
    /// Hash of the stage's settings and its upstream keys.
    pub key: String,
    pub dir: PathBuf,
    /// True when the stage was found in the store rather than built.
    pub reused: bool,
}

impl StageOutput {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl StageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StageCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(stage: &str, settings: &impl Serialize, upstream: &[&StageOutput]) -> Result<String, HarnessError> {
        let mut hasher = Sha256::new();
        hasher.update(stage.as_bytes());
        hasher.update([0]);
        hasher.update(serde_json::to_vec(settings)?);
        for up in upstream {
            hasher.update([0]);
            hasher.update(up.key.as_bytes());
        }
        Ok(hex::encode(hasher.finalize()))
    }

    /// Returns the stored stage if present, otherwise runs `build` in a
    /// scratch directory and moves it into place once it succeeds.
    pub fn run(
        &self,
        stage: &str,
        settings: &impl Serialize,
        upstream: &[&StageOutput],
        build: impl FnOnce(&Path) -> Result<(), HarnessError>,
    ) -> Result<StageOutput, HarnessError> {
        let key = Self::key(stage, settings, upstream)?;
        let dir = self.root.join(format!("{stage}-{}", &key[..16]));
        if dir.join(MANIFEST).is_file() {
            return Ok(StageOutput {
                stage: stage.to_string(),
                key,
                dir,
                reused: true,
            });
        }
        let scratch = self.root.join(format!(".partial-{stage}-{}-{}", &key[..16], std::process::id()));
        if scratch.exists() {
            std::fs::remove_dir_all(&scratch).map_err(|e| HarnessError::io(&scratch, e))?;
        }
        std::fs::create_dir_all(&scratch).map_err(|e| HarnessError::io(&scratch, e))?;
        tracing::info!(stage, key = &key[..16], "building stage");
        if let Err(e) = build(&scratch) {
            let _ = std::fs::remove_dir_all(&scratch);
            return Err(e);
        }
        let manifest = manifest(&scratch, stage, &key, upstream, settings)?;
        super::write_json(&scratch.join(MANIFEST), &manifest)?;
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        }
        std::fs::rename(&scratch, &dir).map_err(|e| HarnessError::io(&dir, e))?;
        Ok(StageOutput {
            stage: stage.to_string(),
            key,
            dir,
            reused: false,
        })
    }

    /// Checks every file of a stored stage against its manifest hash.
    pub fn verify(&self, output: &StageOutput) -> Result<(), HarnessError> {
        let text = super::read_file(&output.path(MANIFEST))?;
        let manifest: serde_json::Value = serde_json::from_str(&text)?;
        let files = manifest["files"].as_object().cloned().unwrap_or_default();
        for (name, hash) in files {
            let path = output.path(&name);
            let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
            if Some(sha256_hex(&bytes).as_str()) != hash.as_str() {
                return Err(HarnessError::Verify(format!("{} changed since it was stored", path.display())));
            }
        }
        Ok(())
    }
}

fn manifest(
    dir: &Path,
    stage: &str,
    key: &str,
    upstream: &[&StageOutput],
    settings: &impl Serialize,
) -> Result<serde_json::Value, HarnessError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut files = serde_json::Map::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        files.insert(name, sha256_hex(&bytes).into());
    }
    Ok(serde_json::json!({
        "stage": stage,
        "key": key,
        "upstream": upstream.iter().map(|u| format!("{}:{}", u.stage, u.key)).collect::<Vec<_>>(),
        "settings": serde_json::to_value(settings)?,
        "files": files,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn second_run_reuses_and_keys_track_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = StageCache::new(tmp.path());
        let builds = Cell::new(0);
        let build = |dir: &Path| {
            builds.set(builds.get() + 1);
            super::super::write_file(&dir.join("x.txt"), "hello")
        };
        let a = cache.run("s", &1u32, &[], build).unwrap();
        assert!(!a.reused);
        let b = cache.run("s", &1u32, &[], build).unwrap();
        assert!(b.reused);
        assert_eq!(a.key, b.key);
        assert_eq!(builds.get(), 1);
        cache.verify(&b).unwrap();
        let c = cache.run("s", &2u32, &[], build).unwrap();
        assert_ne!(c.key, a.key);
        let d = cache.run("t", &1u32, &[&a], build).unwrap();
        let e = cache.run("t", &1u32, &[&c], build).unwrap();
        assert_ne!(d.key, e.key);
        std::fs::write(d.path("x.txt"), "tampered").unwrap();
        assert!(cache.verify(&d).is_err());
    }

    #[test]
    fn failed_build_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = StageCache::new(tmp.path());
        let err = cache.run("s", &0u8, &[], |_| Err(HarnessError::Config("boom".into())));
        assert!(err.is_err());
        assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
    }
}
