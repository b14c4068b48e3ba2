//! Replica-parallel execution with ordered reduction, and the outcome of an experiment.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ConfigError;

/// Environment variable holding the worker count; unset means available parallelism.
pub const THREADS_ENV: &str = "RDSLAB_THREADS";

pub fn thread_count() -> Result<usize, ConfigError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ConfigError::new(THREADS_ENV, format!("must be a positive integer, got {s:?}"))),
        },
    }
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Runs `f(i)` for `i in 0..n` on `pool` and returns the results in index order.
pub fn par_replicas<T, E, F>(pool: &rayon::ThreadPool, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// One checked claim of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub observed: f64,
    /// `"<="`, `">="`, `"<"`, `">"` or `"=="`.
    pub relation: &'static str,
    pub required: f64,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, observed: f64, relation: &'static str, required: f64) -> Self {
        let pass = match relation {
            "<=" => observed <= required,
            ">=" => observed >= required,
            "<" => observed < required,
            ">" => observed > required,
            "==" => observed == required,
            _ => false,
        };
        Self {
            name: name.into(),
            observed,
            relation,
            required,
            pass,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, "==", 1.0)
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} {} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.relation,
            self.required
        )
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// Machine-readable results, written as `results.json`.
    pub results: serde_json::Map<String, serde_json::Value>,
    pub assertions: Vec<Assertion>,
    /// Free-form lines of the human summary.
    pub notes: Vec<String>,
    /// Extra files, name and contents.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn put<T: Serialize>(&mut self, key: &str, value: T) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable result"));
    }

    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.pass)
    }

    pub fn summary(&self, header: &str) -> String {
        let mut s = String::from(header);
        s.push('\n');
        for n in &self.notes {
            s.push_str(n);
            s.push('\n');
        }
        for a in &self.assertions {
            s.push_str(&a.line());
            s.push('\n');
        }
        s.push_str(if self.passed() { "result: PASS\n" } else { "result: FAIL\n" });
        s
    }

    /// Writes `results.json`, `summary.txt` and the extra files into `dir`.
    pub fn write(&self, dir: &Path, header: &str, meta: serde_json::Value) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut doc = serde_json::Map::new();
        doc.insert("meta".into(), meta);
        doc.insert("results".into(), serde_json::Value::Object(self.results.clone()));
        doc.insert("assertions".into(), serde_json::to_value(&self.assertions).expect("assertions"));
        doc.insert("passed".into(), serde_json::Value::Bool(self.passed()));
        let mut json = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json");
        json.push('\n');
        std::fs::write(dir.join("results.json"), json)?;
        std::fs::write(dir.join("summary.txt"), self.summary(header))?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_regardless_of_threads() {
        let f = |i: usize| -> Result<u64, ()> { Ok(rdslab_core::seeding::seed_replica(5, i as u64)) };
        let a = par_replicas(&pool(1), 1000, f).unwrap();
        let b = par_replicas(&pool(4), 1000, f).unwrap();
        assert_eq!(a, b);
        let e: Result<Vec<u64>, usize> = par_replicas(&pool(3), 10, |i| if i == 7 { Err(i) } else { Ok(0) });
        assert_eq!(e, Err(7));
    }

    #[test]
    fn assertion_relations() {
        assert!(Assertion::new("a", 1.0, "<=", 1.0).pass);
        assert!(!Assertion::new("a", 1.0, "<", 1.0).pass);
        assert!(!Assertion::new("a", f64::NAN, ">=", 0.0).pass);
        assert!(Assertion::flag("b", true).pass);
        assert!(Assertion::new("c", 0.95, ">=", 0.9).line().starts_with("[PASS] c"));
    }
}
