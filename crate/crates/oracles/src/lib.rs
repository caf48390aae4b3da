//! Oracle cases for the crossnet crate.
//!
//! Every case draws its inputs from a seeded generator, computes the expected
//! answer with code from [`reference`] (or by hand), and reports the measured
//! error against a tolerance.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crossnet::{FlowField, Tensor};

mod cases;
pub mod reference;
pub mod smoke;

pub use cases::registry;

/// Default global seed.
pub const SUITE_SEED: u64 = 2018;

/// Implementation hooks the cases exercise. Swapping one for a broken
/// version must make the matching cases fail.
#[derive(Clone, Copy)]
pub struct Subject {
    pub warp: fn(&Tensor, &FlowField) -> crossnet::Result<Tensor>,
}

impl Default for Subject {
    fn default() -> Self {
        Self {
            warp: |src, flow| crossnet::imaging::warp(src, flow),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub error: f64,
    pub note: String,
}

impl Measurement {
    pub fn new(error: f64, note: impl Into<String>) -> Self {
        Self {
            error,
            note: note.into(),
        }
    }
}

pub type CaseFn = fn(&Subject, &mut ChaCha8Rng) -> Result<Measurement, String>;

pub struct OracleCase {
    pub name: &'static str,
    pub module: &'static str,
    pub tags: &'static [&'static str],
    /// Pass when the measured error is at most this.
    pub tolerance: f64,
    pub run: CaseFn,
}

impl OracleCase {
    pub fn has_any_tag(&self, tags: &[String]) -> bool {
        tags.iter().any(|t| t == self.module || self.tags.contains(&t.as_str()))
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub module: String,
    pub error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub seed: u64,
    pub results: Vec<CaseResult>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&CaseResult> {
        self.results.iter().filter(|r| !r.passed).collect()
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let err = r.error.map_or("-".to_string(), |e| format!("{e:.3e}"));
            let _ = writeln!(
                s,
                "{} {:<34} {:<18} err {:>10} tol {:>9.2e} {:>7.2}s  {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.module,
                err,
                r.tolerance,
                r.seconds,
                r.note
            );
        }
        let failed = self.failures().len();
        let _ = writeln!(
            s,
            "{} cases, {} failed, seed {}, {:.1}s",
            self.results.len(),
            failed,
            self.seed,
            self.seconds
        );
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("case,module,passed,error,tolerance,seconds,note\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{:.3},\"{}\"",
                r.name,
                r.module,
                r.passed,
                r.error.map_or(String::new(), |e| format!("{e:e}")),
                r.tolerance,
                r.seconds,
                r.note.replace('"', "'")
            );
        }
        s
    }
}

/// Selection of cases by tag. A case runs when it carries any `include` tag
/// (or `include` is empty) and none of the `exclude` tags. Module names count
/// as tags.
#[derive(Clone, Debug, Default)]
pub struct Filter {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl Filter {
    pub fn tags(include: &[&str]) -> Self {
        Self {
            include: include.iter().map(|s| s.to_string()).collect(),
            exclude: Vec::new(),
        }
    }

    pub fn without(mut self, exclude: &[&str]) -> Self {
        self.exclude.extend(exclude.iter().map(|s| s.to_string()));
        self
    }

    pub fn selects(&self, case: &OracleCase) -> bool {
        (self.include.is_empty() || case.has_any_tag(&self.include)) && !case.has_any_tag(&self.exclude)
    }
}

/// Runs the registered cases selected by `filter`.
pub fn run_suite(filter: &Filter, seed: u64) -> SuiteReport {
    run_cases(&Subject::default(), &registry(), filter, seed)
}

pub fn run_cases(subject: &Subject, cases: &[OracleCase], filter: &Filter, seed: u64) -> SuiteReport {
    let t0 = Instant::now();
    let mut results = Vec::new();
    for (i, case) in cases.iter().enumerate().filter(|(_, c)| filter.selects(c)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (case.run)(subject, &mut rng)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let seconds = t.elapsed().as_secs_f64();
        let (error, note) = match outcome {
            Ok(m) => (Some(m.error), m.note),
            Err(e) => (None, e),
        };
        results.push(CaseResult {
            name: case.name.to_string(),
            module: case.module.to_string(),
            passed: error.is_some_and(|e| e <= case.tolerance),
            error,
            tolerance: case.tolerance,
            note,
            seconds,
        });
    }
    SuiteReport {
        seed,
        results,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let cases = registry();
        let mut names: Vec<_> = cases.iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), cases.len());
    }

    #[test]
    fn filter_semantics() {
        let cases = registry();
        let warp = Filter::tags(&["warp"]);
        let picked: Vec<_> = cases.iter().filter(|c| warp.selects(c)).collect();
        assert!(!picked.is_empty());
        assert!(picked.iter().all(|c| c.module == "imaging_core"));
        let no_slow = Filter::default().without(&["slow"]);
        assert!(cases.iter().filter(|c| no_slow.selects(c)).all(|c| !c.tags.contains(&"slow")));
    }
}
