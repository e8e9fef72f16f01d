//! Benchmark harness: runs every instance of a manifest several times and
//! reports the median wall time.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::frontend;

use super::report::verdict_name;
use super::{generalize, search, Algorithm, SearchOptions, Verdict};

fn default_max_observations() -> usize {
    10
}

fn default_repetitions() -> usize {
    10
}

/// One manifest entry. Relative paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: PathBuf,
    #[serde(default = "default_max_observations")]
    pub max_observations: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkResult {
    pub name: String,
    pub verdict: Option<String>,
    /// Detection bound, for bugs.
    pub k: Option<usize>,
    pub combinations: Option<u64>,
    pub median_ms: Option<f64>,
    pub repetitions: usize,
    pub error: Option<String>,
}

impl BenchmarkResult {
    fn error(entry: &ManifestEntry, message: String) -> Self {
        BenchmarkResult {
            name: entry.name.clone(),
            verdict: None,
            k: None,
            combinations: None,
            median_ms: None,
            repetitions: entry.repetitions,
            error: Some(message),
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid manifest {}: {e}", path.display()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs one entry. Failures are recorded in the result, never propagated.
pub fn run_entry(entry: &ManifestEntry, base: &Path, algorithm: Algorithm, opts: &SearchOptions) -> BenchmarkResult {
    let file = base.join(&entry.file);
    let source = match fs::read_to_string(&file) {
        Ok(s) => s,
        Err(e) => return BenchmarkResult::error(entry, format!("cannot read {}: {e}", file.display())),
    };
    let gen = match frontend::load(&source).map_err(|e| e.to_string()).and_then(|i| generalize(&i).map_err(|e| e.to_string())) {
        Ok(g) => g,
        Err(e) => return BenchmarkResult::error(entry, e),
    };
    let opts = SearchOptions { max_observations: entry.max_observations, ..opts.clone() };
    let mut times = Vec::new();
    let mut last = None;
    for _ in 0..entry.repetitions.max(1) {
        let start = Instant::now();
        match search(&gen, algorithm, &opts) {
            Ok(outcome) => {
                times.push(start.elapsed().as_secs_f64() * 1000.0);
                last = Some(outcome);
            }
            Err(e) => return BenchmarkResult::error(entry, e.to_string()),
        }
    }
    let outcome = last.expect("at least one repetition");
    BenchmarkResult {
        name: entry.name.clone(),
        verdict: Some(match &outcome.verdict {
            Verdict::Inconclusive(r) => format!("inconclusive({})", r.as_str()),
            v => verdict_name(v).to_string(),
        }),
        k: outcome.verdict.bug_k(),
        combinations: Some(outcome.stats.combinations),
        median_ms: Some(median(times)),
        repetitions: entry.repetitions.max(1),
        error: None,
    }
}

pub fn run_manifest(path: &Path, algorithm: Algorithm, opts: &SearchOptions) -> Result<Vec<BenchmarkResult>, String> {
    let entries = load_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(entries.iter().map(|e| run_entry(e, base, algorithm, opts)).collect())
}

pub fn table(results: &[BenchmarkResult]) -> String {
    let mut out = format!(
        "{:<28} {:<24} {:>4} {:>13} {:>12}\n",
        "instance", "verdict", "k", "combinations", "median ms"
    );
    for r in results {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let verdict = match &r.error {
            Some(e) => format!("error: {e}"),
            None => opt(r.verdict.clone()),
        };
        writeln!(
            out,
            "{:<28} {:<24} {:>4} {:>13} {:>12}",
            r.name,
            verdict,
            opt(r.k.map(|k| k.to_string())),
            opt(r.combinations.map(|c| c.to_string())),
            opt(r.median_ms.map(|m| format!("{m:.1}"))),
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn manifest_defaults() {
        let entries: Vec<ManifestEntry> = serde_json::from_str(r#"[{"name": "a", "file": "a.hyp"}]"#).unwrap();
        assert_eq!(entries[0].max_observations, 10);
        assert_eq!(entries[0].repetitions, 10);
    }
}
