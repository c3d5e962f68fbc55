//! Output tables and atomic artifact writing.
//!
//! Every CSV starts with a `# schema=…` line that freezes its columns.
//! Wall-clock data never enters a CSV (except `bench`, whose purpose is
//! timing); it goes to the `.meta.json` sidecar so reruns are byte-identical.

use std::path::{Path, PathBuf};

use ising_causal::EffectEstimate;
use serde_json::json;

use crate::fail::Failure;

pub const EFFECTS_SCHEMA: &str = "causal-ising/effects/1";
pub const FIT_SCHEMA: &str = "causal-ising/fit/1";
pub const LIMITS_SCHEMA: &str = "causal-ising/limits/1";
pub const MIXING_SCHEMA: &str = "causal-ising/mixing/1";
pub const TRACE_SCHEMA: &str = "causal-ising/trace/1";
pub const DATA_SCHEMA: &str = "causal-ising/data/1";
pub const BENCH_SCHEMA: &str = "causal-ising/bench/1";

/// A CSV table with a schema line, built in memory.
pub struct Table {
    schema: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(schema: &'static str, header: &[&str]) -> Result<Self, Failure> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { schema, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>, Failure> {
        let body = self.writer.into_inner().map_err(|e| Failure::io(e.to_string()))?;
        let mut out = format!("# schema={}\n", self.schema).into_bytes();
        out.extend(body);
        Ok(out)
    }
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Row context shared by every effects row.
pub struct RowContext<'a> {
    pub seed: u64,
    pub tau: f64,
    pub theta: &'a [f64],
    pub gamma: f64,
}

pub const EFFECTS_HEADER: [&str; 13] = [
    "method", "n", "seed", "replicates", "estimator_seed", "tau", "theta", "gamma", "de", "de_se", "ie", "ie_se",
    "notes",
];

pub fn effects_row(est: &EffectEstimate, ctx: &RowContext) -> Vec<String> {
    vec![
        est.method.clone(),
        est.n.to_string(),
        ctx.seed.to_string(),
        est.replicates.to_string(),
        est.seed.map(|s| s.to_string()).unwrap_or_default(),
        ctx.tau.to_string(),
        join(ctx.theta),
        ctx.gamma.to_string(),
        est.de.value.to_string(),
        est.de.se.to_string(),
        est.ie.value.to_string(),
        est.ie.se.to_string(),
        est.notes.join("; "),
    ]
}

/// Files to be written together once the command has succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    /// Writes every file through a temporary name and renames at the end; on
    /// any error the files already placed are removed.
    pub fn commit(self, dir: &Path, command: &str, runtime_secs: f64, threads: usize) -> Result<Vec<PathBuf>, Failure> {
        std::fs::create_dir_all(dir)?;
        let meta = json!({
            "command": command,
            "files": self.names(),
            "runtime_secs": runtime_secs,
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let mut files = self.files;
        files.push((
            PathBuf::from(format!("{command}.meta.json")),
            serde_json::to_vec_pretty(&meta).map_err(|e| Failure::io(e.to_string()))?,
        ));
        let mut staged = Vec::new();
        let result = (|| {
            for (name, bytes) in &files {
                let tmp = dir.join(format!(".{}.partial", name.display()));
                std::fs::write(&tmp, bytes)?;
                staged.push(tmp);
            }
            Ok::<_, std::io::Error>(())
        })();
        if let Err(e) = result {
            for tmp in &staged {
                let _ = std::fs::remove_file(tmp);
            }
            return Err(e.into());
        }
        let mut placed = Vec::new();
        for ((name, _), tmp) in files.iter().zip(&staged) {
            let target = dir.join(name);
            if let Err(e) = std::fs::rename(tmp, &target) {
                for p in placed.iter().chain(staged.iter()) {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.into());
            }
            placed.push(target);
        }
        Ok(placed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_schema_line_and_header() {
        let mut t = Table::new(FIT_SCHEMA, &["a", "b"]).unwrap();
        t.row(["1", "x,y"]).unwrap();
        let s = String::from_utf8(t.into_bytes().unwrap()).unwrap();
        assert_eq!(s, "# schema=causal-ising/fit/1\na,b\n1,\"x,y\"\n");
    }

    #[test]
    fn commit_writes_everything_and_a_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("x.csv", b"1\n".to_vec());
        let placed = a.commit(dir.path(), "oracle", 0.5, 1).unwrap();
        assert_eq!(placed.len(), 2);
        assert_eq!(std::fs::read(dir.path().join("x.csv")).unwrap(), b"1\n");
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("oracle.meta.json")).unwrap()).unwrap();
        assert_eq!(meta["runtime_secs"], 0.5);
        let leftovers = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".partial"))
            .count();
        assert_eq!(leftovers, 0);
    }
}
