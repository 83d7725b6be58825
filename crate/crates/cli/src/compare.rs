//! Paired per-seed comparison of several methods on the same problems.

use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::experiment::run_experiment;
use crate::record::{format_float, TrialRecord};

pub const COMPARE_SCHEMA_LINE: &str = "#schema,rigid-refine-compare,1";

/// Error metrics compared per seed; lower is better.
pub type MetricAccessor = fn(&TrialRecord) -> Option<f64>;

pub const COMPARED_METRICS: [(&str, MetricAccessor); 2] =
    [("iso_rot_deg", |r| r.iso_rot_deg), ("trans_l2", |r| r.trans_l2)];

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("nothing to compare")]
    Empty,
    #[error("config {index} differs from the baseline in problem spec or trial count")]
    MismatchedSpecs { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTest {
    pub config_index: usize,
    pub metric: &'static str,
    /// Seeds where the config beats the baseline.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Two-sided exact binomial p-value over the untied seeds.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    /// `records[k][i]`: config `k`, trial `i`.
    pub records: Vec<Vec<TrialRecord>>,
    pub sign_tests: Vec<SignTest>,
}

impl Comparison {
    /// Config `k` minus baseline, per seed, for metric `m` of [`COMPARED_METRICS`].
    pub fn paired_differences(&self, k: usize, m: usize) -> Vec<Option<f64>> {
        let f = COMPARED_METRICS[m].1;
        self.records[0]
            .iter()
            .zip(&self.records[k])
            .map(|(base, other)| Some(f(other)? - f(base)?))
            .collect()
    }
}

/// Two-sided exact sign test: `P(X ≤ min(w, l)) · 2` for `X ~ Bin(w + l, ½)`, capped at 1.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k_max = wins.min(losses);
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        tail += (ln_choose + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

pub fn compare_records(labels: Vec<String>, records: Vec<Vec<TrialRecord>>) -> Comparison {
    let mut comparison = Comparison {
        labels,
        records,
        sign_tests: Vec::new(),
    };
    for k in 1..comparison.records.len() {
        for (m, (metric, _)) in COMPARED_METRICS.iter().enumerate() {
            let diffs = comparison.paired_differences(k, m);
            let wins = diffs.iter().flatten().filter(|d| **d < 0.0).count();
            let losses = diffs.iter().flatten().filter(|d| **d > 0.0).count();
            let ties = diffs.iter().flatten().filter(|d| **d == 0.0).count();
            comparison.sign_tests.push(SignTest {
                config_index: k,
                metric,
                wins,
                losses,
                ties,
                p_value: sign_test_p_value(wins, losses),
            });
        }
    }
    comparison
}

/// Runs every config on the baseline's (config 0) problems.
pub fn compare_methods(configs: &[ExperimentConfig]) -> Result<Comparison, CompareError> {
    let base = configs.first().ok_or(CompareError::Empty)?;
    if let Some(index) = configs
        .iter()
        .position(|c| c.problem != base.problem || c.trials != base.trials)
    {
        return Err(CompareError::MismatchedSpecs { index });
    }
    let labels = configs
        .iter()
        .enumerate()
        .map(|(i, c)| format!("c{i}_{}", c.method))
        .collect();
    Ok(compare_records(labels, configs.iter().map(run_experiment).collect()))
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut out = String::from(COMPARE_SCHEMA_LINE);
    out.push('\n');
    let mut header = String::from("seed");
    for (k, label) in c.labels.iter().enumerate() {
        for (metric, _) in COMPARED_METRICS {
            header.push_str(&format!(",{label}_{metric}"));
        }
        if k > 0 {
            for (metric, _) in COMPARED_METRICS {
                header.push_str(&format!(",{label}_diff_{metric}"));
            }
        }
    }
    out.push_str(&header);
    out.push('\n');
    let diffs: Vec<Vec<Vec<Option<f64>>>> = (0..c.records.len())
        .map(|k| {
            (0..COMPARED_METRICS.len())
                .map(|m| if k == 0 { Vec::new() } else { c.paired_differences(k, m) })
                .collect()
        })
        .collect();
    for (i, base) in c.records[0].iter().enumerate() {
        let mut line = base.seed.to_string();
        for (k, records) in c.records.iter().enumerate() {
            for (_, f) in COMPARED_METRICS {
                line.push(',');
                line.push_str(&format_float(f(&records[i])));
            }
            if k > 0 {
                for d in &diffs[k] {
                    line.push(',');
                    line.push_str(&format_float(d[i]));
                }
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    for t in &c.sign_tests {
        out.push_str(&format!(
            "#sign,{},{},wins={},losses={},ties={},p={}\n",
            c.labels[t.config_index],
            t.metric,
            t.wins,
            t.losses,
            t.ties,
            format_float(Some(t.p_value))
        ));
    }
    out
}
