//! Machine-readable experiment reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use umspace::rng::Estimate;

/// How a row decides pass or fail.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Check {
    /// `|z| ≤ threshold`; with `soft_limit`, `threshold < |z| ≤ soft_limit`
    /// only warns.
    Statistical { threshold: f64, soft_limit: Option<f64> },
    /// `|estimate - oracle| ≤ tolerance`.
    Tolerance { tolerance: f64 },
    /// An algebraic identity that held or did not.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Warn => "WARN",
            Status::Fail => "FAIL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub statistic: String,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub z: f64,
    pub pass: bool,
    pub status: Status,
    pub check: Check,
}

impl ReportRow {
    pub fn statistical(statistic: &str, est: Estimate, oracle: f64, threshold: f64) -> Self {
        Self::graded(statistic, est, oracle, threshold, None)
    }

    pub fn soft(statistic: &str, est: Estimate, oracle: f64, threshold: f64, soft_limit: f64) -> Self {
        Self::graded(statistic, est, oracle, threshold, Some(soft_limit))
    }

    fn graded(statistic: &str, est: Estimate, oracle: f64, threshold: f64, soft_limit: Option<f64>) -> Self {
        let z = est.z_against(oracle);
        Self::from_z(statistic, est, oracle, z, threshold, soft_limit)
    }

    /// Compares two independent estimates; `oracle` holds the second mean.
    pub fn between(statistic: &str, a: Estimate, b: Estimate, threshold: f64) -> Self {
        let z = a.z_between(&b);
        let joint = Estimate {
            mean: a.mean,
            stderr: a.stderr.hypot(b.stderr),
            n: a.n,
        };
        Self::from_z(statistic, joint, b.mean, z, threshold, None)
    }

    fn from_z(statistic: &str, est: Estimate, oracle: f64, z: f64, threshold: f64, soft_limit: Option<f64>) -> Self {
        let pass = z.abs() <= threshold;
        let status = match (pass, soft_limit) {
            (true, _) => Status::Pass,
            (false, Some(limit)) if z.abs() <= limit => Status::Warn,
            _ => Status::Fail,
        };
        ReportRow {
            statistic: statistic.to_string(),
            estimate: est.mean,
            stderr: est.stderr,
            oracle,
            z,
            pass,
            status,
            check: Check::Statistical { threshold, soft_limit },
        }
    }

    pub fn tolerance(statistic: &str, est: Estimate, oracle: f64, tolerance: f64) -> Self {
        let pass = (est.mean - oracle).abs() <= tolerance;
        ReportRow {
            statistic: statistic.to_string(),
            estimate: est.mean,
            stderr: est.stderr,
            oracle,
            z: est.z_against(oracle),
            pass,
            status: if pass { Status::Pass } else { Status::Fail },
            check: Check::Tolerance { tolerance },
        }
    }

    /// An identity checked on `checked` instances of which `failures` broke.
    pub fn exact(statistic: &str, failures: usize, checked: usize) -> Self {
        let pass = failures == 0 && checked > 0;
        ReportRow {
            statistic: format!("{statistic} ({checked} checked)"),
            estimate: failures as f64,
            stderr: 0.0,
            oracle: 0.0,
            z: 0.0,
            pass,
            status: if pass { Status::Pass } else { Status::Fail },
            check: Check::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: usize,
    pub rows: Vec<ReportRow>,
    /// Kept out of serialized output so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            config: BTreeMap::new(),
            seed,
            workers: umspace_workers(),
            rows: Vec::new(),
            wall_clock: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// Worst row status; an empty report fails.
    pub fn status(&self) -> Status {
        self.rows.iter().map(|r| r.status).max().unwrap_or(Status::Fail)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,estimate,stderr,oracle,z,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.statistic),
                r.estimate,
                r.stderr,
                r.oracle,
                r.z,
                r.pass
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn umspace_workers() -> usize {
    rayon::current_num_threads()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, stderr: f64) -> Estimate {
        Estimate { mean, stderr, n: 100 }
    }

    #[test]
    fn pass_flag_follows_z() {
        let r = ReportRow::statistical("x", est(1.0, 0.1), 1.25, 3.0);
        assert!(r.pass);
        let r = ReportRow::statistical("x", est(1.0, 0.1), 1.5, 3.0);
        assert!(!r.pass);
        assert_eq!(r.status, Status::Fail);
        let r = ReportRow::soft("x", est(1.0, 0.1), 1.45, 4.0, 5.0);
        assert!(!r.pass);
        assert_eq!(r.status, Status::Warn);
    }

    #[test]
    fn exact_rows() {
        assert!(ReportRow::exact("id", 0, 10).pass);
        assert!(!ReportRow::exact("id", 1, 10).pass);
        assert!(!ReportRow::exact("id", 0, 0).pass);
    }

    #[test]
    fn csv_and_json_are_stable() {
        let mut r = ExperimentReport::new("demo", 7).with("theta", 2);
        r.workers = 1;
        r.push(ReportRow::statistical("a,b", est(1.0, 0.5), 1.0, 3.0));
        r.wall_clock = Some(Duration::from_secs(3));
        assert_eq!(r.to_csv(), "statistic,estimate,stderr,oracle,z,pass\n\"a,b\",1,0.5,1,0,true\n");
        let json = r.to_json();
        assert!(!json.contains("wall_clock"));
        assert_eq!(json, r.clone().to_json());
        assert_eq!(r.status(), Status::Pass);
    }
}
