//! Subcommand implementations. Each one validates its parameters, writes
//! its artifacts into the output directory and returns a summary.

pub mod bounds;
pub mod diversity;
pub mod explain_sample;
pub mod flow;
pub mod oracle_check;
pub mod train_grid;
pub mod train_mnist;

use std::path::PathBuf;

use anyhow::{Context as _, Result};

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Context {
    pub fn new(seed: u64, out_dir: impl Into<PathBuf>, workers: usize) -> Result<Self> {
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Context {
            seed,
            out_dir,
            workers: workers.max(1),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Runs `f` inside a pool of `workers` threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.workers).build()?;
        Ok(pool.install(f))
    }
}

/// What a subcommand reports back: one human-readable line and the JSON
/// summary it wrote.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub line: String,
    pub summary: serde_json::Value,
}

impl Outcome {
    pub fn new(line: String, summary: serde_json::Value) -> Self {
        Outcome { line, summary }
    }
}
