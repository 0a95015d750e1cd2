//! Metric traces and run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hscg_core::RunRecord;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One metric record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub solver: String,
    pub seed: u64,
    pub epoch: f64,
    pub t: usize,
    pub objective: f64,
    pub grad_map_sq: f64,
    #[serde(rename = "oracle_F")]
    pub oracle_f: u64,
    #[serde(rename = "oracle_J")]
    pub oracle_j: u64,
    /// Negated objective, reported for the portfolio problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

/// Summary of the returned iterate, stored next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub solver: String,
    pub seed: u64,
    pub n: usize,
    pub selected: usize,
    pub x_bar: Vec<f64>,
    pub eta_bar: f64,
    pub gamma_bar: f64,
    #[serde(rename = "oracle_F")]
    pub oracle_f: u64,
    #[serde(rename = "oracle_J")]
    pub oracle_j: u64,
    pub epochs: f64,
    pub complete: bool,
    pub final_objective: Option<f64>,
    pub final_grad_map_sq: Option<f64>,
}

pub fn trace(rec: &RunRecord, with_reward: bool) -> Vec<TraceRecord> {
    rec.metric_records()
        .map(|r| {
            let objective = r.objective.expect("metric record");
            TraceRecord {
                solver: rec.solver.clone(),
                seed: rec.seed,
                epoch: r.epoch,
                t: r.t,
                objective,
                grad_map_sq: r.grad_map_sq.expect("metric record"),
                oracle_f: r.oracle_f,
                oracle_j: r.oracle_j,
                reward: with_reward.then_some(-objective),
            }
        })
        .collect()
}

pub fn summary(rec: &RunRecord, trace: &[TraceRecord]) -> FinalSummary {
    FinalSummary {
        solver: rec.solver.clone(),
        seed: rec.seed,
        n: rec.n,
        selected: rec.selected,
        x_bar: rec.x_bar.clone(),
        eta_bar: rec.eta_bar,
        gamma_bar: rec.gamma_bar,
        oracle_f: rec.counters.fn_evals,
        oracle_j: rec.counters.jac_evals,
        epochs: rec.epochs(),
        complete: rec.complete,
        final_objective: trace.last().map(|r| r.objective),
        final_grad_map_sq: trace.last().map(|r| r.grad_map_sq),
    }
}

pub fn stem(solver: &str, seed: u64) -> String {
    format!("{solver}_{seed}")
}

pub fn final_path(dir: &Path, solver: &str, seed: u64) -> PathBuf {
    dir.join(format!("{}.final.json", stem(solver, seed)))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trace_csv(trace: &[TraceRecord], with_reward: bool) -> String {
    let mut s = String::from("solver,seed,epoch,t,objective,grad_map_sq,oracle_F,oracle_J");
    if with_reward {
        s.push_str(",reward");
    }
    s.push('\n');
    for r in trace {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.solver, r.seed, r.epoch, r.t, r.objective, r.grad_map_sq, r.oracle_f, r.oracle_j
        );
        if with_reward {
            let _ = write!(s, ",{}", opt(r.reward));
        }
        s.push('\n');
    }
    s
}

pub fn trace_jsonl(trace: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in trace {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Writes `<stem>.jsonl`, `<stem>.csv`, `<stem>.wall.csv` and `<stem>.final.json`.
pub fn write_run(
    dir: &Path,
    rec: &RunRecord,
    with_reward: bool,
) -> Result<(Vec<TraceRecord>, FinalSummary), CliError> {
    let tr = trace(rec, with_reward);
    let fin = summary(rec, &tr);
    let base = stem(&rec.solver, rec.seed);
    fs::write(dir.join(format!("{base}.jsonl")), trace_jsonl(&tr))?;
    fs::write(dir.join(format!("{base}.csv")), trace_csv(&tr, with_reward))?;
    let mut wall = String::from("t,wall_ms\n");
    for (r, ms) in rec.records.iter().zip(&rec.wall_ms) {
        if r.objective.is_some() {
            let _ = writeln!(wall, "{},{ms:.3}", r.t);
        }
    }
    fs::write(dir.join(format!("{base}.wall.csv")), wall)?;
    let json = serde_json::to_string_pretty(&fin).expect("summary serializes");
    fs::write(final_path(dir, &rec.solver, rec.seed), json + "\n")?;
    Ok((tr, fin))
}

pub fn read_final(dir: &Path, solver: &str, seed: u64) -> Result<FinalSummary, CliError> {
    let path = final_path(dir, solver, seed);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed {}: {e}", path.display())))
}

/// Record of `trace` whose epoch is closest to `epoch`; ties go to the earlier one.
pub fn nearest(trace: &[TraceRecord], epoch: f64) -> Option<&TraceRecord> {
    trace
        .iter()
        .min_by(|a, b| (a.epoch - epoch).abs().total_cmp(&(b.epoch - epoch).abs()))
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: f64, t: usize) -> TraceRecord {
        TraceRecord {
            solver: "s".into(),
            seed: 0,
            epoch,
            t,
            objective: 1.0,
            grad_map_sq: 2.0,
            oracle_f: 0,
            oracle_j: 0,
            reward: None,
        }
    }

    #[test]
    fn nearest_prefers_earlier_on_ties() {
        let tr = vec![rec(0.0, 0), rec(1.0, 1), rec(2.0, 2)];
        assert_eq!(nearest(&tr, 0.5).unwrap().t, 0);
        assert_eq!(nearest(&tr, 1.6).unwrap().t, 2);
        assert_eq!(nearest(&tr, 9.0).unwrap().t, 2);
        assert!(nearest(&[], 1.0).is_none());
    }

    #[test]
    fn mean_std_sample_convention() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_and_jsonl_share_columns() {
        let tr = vec![TraceRecord {
            reward: Some(-1.0),
            ..rec(0.5, 3)
        }];
        let csv = trace_csv(&tr, true);
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        let obj: serde_json::Value = serde_json::from_str(trace_jsonl(&tr).trim()).unwrap();
        let keys: Vec<&str> = obj
            .as_object()
            .unwrap()
            .keys()
            .map(|k| k.as_str())
            .collect();
        let mut a = header.clone();
        let mut b = keys.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(csv.lines().nth(1).unwrap(), "s,0,0.5,3,1,2,0,0,-1");
    }
}
