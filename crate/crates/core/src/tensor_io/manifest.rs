use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};

/// Describes one extraction run: which files hold the per-layer matrices
/// and the token/NLL streams for a (dataset, model) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_id: String,
    pub model_id: String,
    pub layer_files: Vec<PathBuf>,
    #[serde(default)]
    pub nll_file: Option<PathBuf>,
    #[serde(default)]
    pub token_file: Option<PathBuf>,
    /// Maximum sequence length fed to the model.
    pub context_window: usize,
    pub seed: u64,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.layer_files.is_empty() {
            return Err(IdError::Schema("manifest lists no layer files".into()));
        }
        if self.context_window == 0 {
            return Err(IdError::Schema("context_window must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a manifest; relative paths inside it are resolved against the
    /// manifest's own directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IdError::io(path, e))?;
        let mut manifest: RunManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        if let Some(base) = path.parent() {
            manifest.resolve_relative_to(base);
        }
        Ok(manifest)
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| IdError::io(path, e))
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.layer_files.iter_mut().for_each(fix);
        self.nll_file.iter_mut().for_each(fix);
        self.token_file.iter_mut().for_each(fix);
    }
}
