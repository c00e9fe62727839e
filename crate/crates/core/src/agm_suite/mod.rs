//! Executable AGM compliance harness.
//!
//! Every scenario builds its own graph under a logical clock, performs
//! revisions or contractions through the belief operators and checks one
//! postulate against the resulting tag bindings, edges and history. The
//! report is a postulate by category matrix with two cells that have no
//! applicable scenario: extensionality over chains and core retainment over
//! temporal sequences.

mod catalog;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::belief::FaultFlags;

pub use catalog::{scenario_catalog, Harness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Postulate {
    K2,
    K3,
    K4,
    K5,
    K6,
    Relevance,
    CoreRetainment,
}

impl Postulate {
    pub const ALL: [Postulate; 7] = [
        Postulate::K2,
        Postulate::K3,
        Postulate::K4,
        Postulate::K5,
        Postulate::K6,
        Postulate::Relevance,
        Postulate::CoreRetainment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Postulate::K2 => "K2",
            Postulate::K3 => "K3",
            Postulate::K4 => "K4",
            Postulate::K5 => "K5",
            Postulate::K6 => "K6",
            Postulate::Relevance => "Relevance",
            Postulate::CoreRetainment => "CoreRetainment",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Postulate::K2 => "K*2",
            Postulate::K3 => "K*3",
            Postulate::K4 => "K*4",
            Postulate::K5 => "K*5",
            Postulate::K6 => "K*6",
            Postulate::Relevance => "Rel.",
            Postulate::CoreRetainment => "Core",
        }
    }
}

impl fmt::Display for Postulate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Postulate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '*' | '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "k2" | "success" => Postulate::K2,
            "k3" | "inclusion" => Postulate::K3,
            "k4" | "vacuity" => Postulate::K4,
            "k5" | "consistency" => Postulate::K5,
            "k6" | "extensionality" => Postulate::K6,
            "relevance" | "rel" => Postulate::Relevance,
            "coreretainment" | "core" => Postulate::CoreRetainment,
            _ => return Err(format!("unknown postulate `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Simple,
    MultiItem,
    Chain,
    Temporal,
    Adversarial,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Simple,
        Category::MultiItem,
        Category::Chain,
        Category::Temporal,
        Category::Adversarial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Simple => "simple",
            Category::MultiItem => "multi-item",
            Category::Chain => "chain",
            Category::Temporal => "temporal",
            Category::Adversarial => "adversarial",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Category::Simple => "Simple",
            Category::MultiItem => "Multi",
            Category::Chain => "Chain",
            Category::Temporal => "Temp.",
            Category::Adversarial => "Adv.",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "simple" => Category::Simple,
            "multi" | "multi-item" | "multiitem" | "multi_item" => Category::MultiItem,
            "chain" => Category::Chain,
            "temporal" | "temp" => Category::Temporal,
            "adversarial" | "adv" => Category::Adversarial,
            _ => return Err(format!("unknown category `{s}`")),
        })
    }
}

/// Cells with no applicable scenario.
pub fn not_applicable(p: Postulate, c: Category) -> bool {
    matches!(
        (p, c),
        (Postulate::K6, Category::Chain) | (Postulate::CoreRetainment, Category::Temporal)
    )
}

pub type Check = fn(&mut Harness) -> Result<(), String>;

#[derive(Clone)]
pub struct Scenario {
    pub id: &'static str,
    pub category: Category,
    pub postulate: Postulate,
    /// One-line description of the graph operations performed.
    pub setup: &'static str,
    pub check: Check,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("id", &self.id)
            .field("category", &self.category)
            .field("postulate", &self.postulate)
            .finish()
    }
}

impl Scenario {
    pub fn run(&self, faults: FaultFlags) -> ScenarioResult {
        let mut h = Harness::new(faults);
        let outcome = (self.check)(&mut h);
        ScenarioResult {
            id: self.id.to_string(),
            category: self.category,
            postulate: self.postulate,
            passed: outcome.is_ok(),
            message: outcome.err(),
        }
    }
}

/// `P`, `C` or `P/C`, e.g. `K2/simple`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Filter {
    pub postulate: Option<Postulate>,
    pub category: Option<Category>,
}

impl Filter {
    pub fn matches(&self, s: &Scenario) -> bool {
        self.postulate.is_none_or(|p| p == s.postulate)
            && self.category.is_none_or(|c| c == s.category)
    }
}

impl FromStr for Filter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((p, c)) = s.split_once('/') {
            return Ok(Filter {
                postulate: Some(p.parse()?),
                category: Some(c.parse()?),
            });
        }
        if let Ok(p) = s.parse::<Postulate>() {
            return Ok(Filter {
                postulate: Some(p),
                category: None,
            });
        }
        let category = s
            .parse::<Category>()
            .map_err(|_| format!("`{s}` is neither a postulate nor a category"))?;
        Ok(Filter {
            postulate: None,
            category: Some(category),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    pub category: Category,
    pub postulate: Postulate,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cell {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
    /// Live cell with nothing selected in this run.
    #[serde(rename = "not-run")]
    NotRun,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplianceReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub duration_ms: u64,
    pub matrix: BTreeMap<Postulate, BTreeMap<Category, Cell>>,
    pub results: Vec<ScenarioResult>,
}

impl ComplianceReport {
    pub fn from_results(results: Vec<ScenarioResult>, duration_ms: u64) -> Self {
        let mut matrix = BTreeMap::new();
        for p in Postulate::ALL {
            let row: &mut BTreeMap<Category, Cell> = matrix.entry(p).or_default();
            for c in Category::ALL {
                let cell = if not_applicable(p, c) {
                    Cell::NotApplicable
                } else {
                    let mut here = results.iter().filter(|r| r.postulate == p && r.category == c);
                    let mut any = false;
                    let mut all = true;
                    for r in here.by_ref() {
                        any = true;
                        all &= r.passed;
                    }
                    match (any, all) {
                        (false, _) => Cell::NotRun,
                        (true, true) => Cell::Pass,
                        (true, false) => Cell::Fail,
                    }
                };
                row.insert(c, cell);
            }
        }
        let passed = results.iter().filter(|r| r.passed).count();
        ComplianceReport {
            total: results.len(),
            passed,
            failed: results.len() - passed,
            duration_ms,
            matrix,
            results,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn cell(&self, p: Postulate, c: Category) -> Cell {
        self.matrix[&p][&c]
    }

    fn rate(&self, keep: impl Fn(&ScenarioResult) -> bool) -> String {
        let (n, ok) = self
            .results
            .iter()
            .filter(|r| keep(r))
            .fold((0, 0), |(n, ok), r| (n + 1, ok + r.passed as usize));
        if n == 0 {
            "--".into()
        } else {
            format!("{}%", ok * 100 / n)
        }
    }

    /// Plain-text matrix: one row per postulate, pass rate per row and column.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6}", "Post.");
        for c in Category::ALL {
            out.push_str(&format!(" {:>7}", c.label()));
        }
        out.push_str(&format!(" {:>7}\n", "Pass"));
        for p in Postulate::ALL {
            out.push_str(&format!("{:<6}", p.label()));
            for c in Category::ALL {
                let mark = match self.cell(p, c) {
                    Cell::Pass => "ok",
                    Cell::Fail => "FAIL",
                    Cell::NotApplicable => "--",
                    Cell::NotRun => ".",
                };
                out.push_str(&format!(" {mark:>7}"));
            }
            out.push_str(&format!(" {:>7}\n", self.rate(|r| r.postulate == p)));
        }
        out.push_str(&format!("{:<6}", "Ovrl"));
        for c in Category::ALL {
            out.push_str(&format!(" {:>7}", self.rate(|r| r.category == c)));
        }
        out.push_str(&format!(" {:>7}\n", self.rate(|_| true)));
        out.push_str(&format!(
            "{} scenarios: {} passed, {} failed.\n",
            self.total, self.passed, self.failed
        ));
        for r in self.results.iter().filter(|r| !r.passed) {
            out.push_str(&format!(
                "FAILED {}: {}\n",
                r.id,
                r.message.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub filter: Filter,
    pub faults: FaultFlags,
    /// Run each scenario on its own thread.
    pub parallel: bool,
}

/// Runs `scenarios` in the given order.
pub fn run_scenarios(scenarios: &[Scenario], opts: &RunOptions) -> ComplianceReport {
    let start = Instant::now();
    let selected: Vec<&Scenario> = scenarios.iter().filter(|s| opts.filter.matches(s)).collect();
    let results = if opts.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = selected
                .iter()
                .map(|s| scope.spawn(|| s.run(opts.faults)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scenario thread panicked"))
                .collect()
        })
    } else {
        selected.iter().map(|s| s.run(opts.faults)).collect()
    };
    ComplianceReport::from_results(results, start.elapsed().as_millis() as u64)
}

pub fn run_all() -> ComplianceReport {
    run_scenarios(&scenario_catalog(), &RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn catalog_covers_the_grid() {
        let cat = scenario_catalog();
        assert_eq!(cat.len(), 49);
        let ids: BTreeSet<_> = cat.iter().map(|s| s.id).collect();
        assert_eq!(ids.len(), 49);
        for p in Postulate::ALL {
            for c in Category::ALL {
                let n = cat.iter().filter(|s| s.postulate == p && s.category == c).count();
                if not_applicable(p, c) {
                    assert_eq!(n, 0, "{p}/{c}");
                } else {
                    assert!(n >= 1, "{p}/{c}");
                }
            }
        }
        assert_eq!(
            cat.iter().filter(|s| s.category == Category::Adversarial).count(),
            7
        );
    }

    #[test]
    fn full_run_passes() {
        let rep = run_all();
        assert!(rep.all_passed(), "{}", rep.table());
        assert_eq!(rep.passed, 49);
        assert_eq!(rep.cell(Postulate::K6, Category::Chain), Cell::NotApplicable);
        assert_eq!(
            rep.cell(Postulate::CoreRetainment, Category::Temporal),
            Cell::NotApplicable
        );
    }

    #[test]
    fn skipping_supersedes_fails_consistency() {
        let rep = run_scenarios(
            &scenario_catalog(),
            &RunOptions {
                faults: FaultFlags {
                    skip_supersedes: true,
                },
                ..Default::default()
            },
        );
        for c in Category::ALL {
            assert_eq!(rep.cell(Postulate::K5, c), Cell::Fail, "{c}");
        }
        // Two adversarial scenarios count SUPERSEDES links directly.
        let others: Vec<&str> = rep
            .results
            .iter()
            .filter(|r| r.postulate != Postulate::K5 && !r.passed)
            .map(|r| r.id.as_str())
            .collect();
        assert_eq!(others, ["adv-rapid-revisions", "adv-mixed-edges"]);
    }

    #[test]
    fn filters_parse_and_select() {
        let f: Filter = "K2/simple".parse().unwrap();
        let rep = run_scenarios(
            &scenario_catalog(),
            &RunOptions {
                filter: f,
                ..Default::default()
            },
        );
        assert_eq!(rep.total, 2);
        assert_eq!(rep.cell(Postulate::K2, Category::Simple), Cell::Pass);
        assert_eq!(rep.cell(Postulate::K3, Category::Simple), Cell::NotRun);
        assert_eq!("K*5".parse::<Filter>().unwrap().postulate, Some(Postulate::K5));
        assert_eq!("multi".parse::<Filter>().unwrap().category, Some(Category::MultiItem));
        assert!("K9/simple".parse::<Filter>().is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let rep = run_scenarios(
            &scenario_catalog(),
            &RunOptions {
                parallel: true,
                ..Default::default()
            },
        );
        assert_eq!(rep.passed, 49);
    }

    #[test]
    fn json_shape() {
        let rep = run_all();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["matrix"]["K6"]["chain"], "n/a");
        assert_eq!(v["matrix"]["K2"]["simple"], "pass");
        assert_eq!(v["total"], 49);
    }
}
