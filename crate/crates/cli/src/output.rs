use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use netfair::data_io::json_digest;
use serde::Serialize;

/// The run configuration echoed into every output: subcommand name plus the
/// parsed arguments.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, T: Serialize> {
    pub command: &'static str,
    pub args: &'a T,
}

impl<T: Serialize> RunConfig<'_, T> {
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

/// A run directory: `results/` for tables, `ckpt/` for checkpoints.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    digest: String,
}

impl RunDir {
    pub fn create<T: Serialize>(root: PathBuf, config: &RunConfig<'_, T>) -> Result<Self> {
        for sub in ["results", "ckpt"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let digest = config.digest();
        let run = Self { root, digest };
        let echo = serde_json::json!({ "config": config, "config_digest": run.digest });
        let path = run.results(&format!("{}.config.json", config.command));
        fs::write(&path, serde_json::to_string_pretty(&echo)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(run)
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn results(&self, file: &str) -> PathBuf {
        self.root.join("results").join(file)
    }

    pub fn ckpt(&self, name: &str) -> PathBuf {
        self.root.join("ckpt").join(format!("{name}.nfck"))
    }

    /// Writes `header` and `rows` to `results/<file>`.
    pub fn write_table(&self, file: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let path = self.results(file);
        write_lines(&path, header, rows)?;
        Ok(path)
    }
}

pub fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    (netfair::stats::mean(values), netfair::stats::std_dev(values))
}

/// Fails listing every problem when any was found.
pub fn ensure_valid(what: &str, problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
    anyhow::bail!("invalid {what} configuration:\n{}", list.join("\n"))
}
