use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::KernelModel;
use crate::mpm::MpmModel;
use crate::solver::LinearModel;

/// A saved model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    Linear(LinearModel),
    Kernel(KernelModel),
    Mpm(MpmModel),
}

impl ModelFile {
    pub fn dim(&self) -> usize {
        match self {
            ModelFile::Linear(m) => m.dim(),
            ModelFile::Kernel(m) => m.dim(),
            ModelFile::Mpm(m) => m.model.dim(),
        }
    }

    pub fn bias(&self) -> f64 {
        match self {
            ModelFile::Linear(m) => m.bias,
            ModelFile::Kernel(m) => m.bias,
            ModelFile::Mpm(m) => m.model.bias,
        }
    }

    /// Decision values `f(x) − b`.
    pub fn scores(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            ModelFile::Linear(m) => m.scores(features),
            ModelFile::Kernel(m) => m.scores(features),
            ModelFile::Mpm(m) => m.model.scores(features),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
