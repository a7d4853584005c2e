use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::experiment::run::RunLog;

/// Percentile `q` in [0, 1] of an ascending sample, interpolating linearly
/// between the order statistics around rank `q * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let v = sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]);
    v.clamp(sorted[lo], sorted[hi])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p2: f64,
    pub p98: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        // Clamp guards the mean against rounding past the sample range.
        let mean = (v.iter().sum::<f64>() / v.len() as f64).clamp(v[0], v[v.len() - 1]);
        Some(Summary {
            mean,
            median: percentile_sorted(&v, 0.5),
            p2: percentile_sorted(&v, 0.02),
            p98: percentile_sorted(&v, 0.98),
            n: v.len(),
        })
    }
}

/// Cross-seed statistics per evaluation point; `None` where no run had
/// finished an episode yet.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardStats {
    pub points: Vec<(u64, Option<Summary>)>,
}

pub const EVAL_INTERVAL: u64 = 1000;

/// Every `EVAL_INTERVAL` steps up to and including `total`.
pub fn default_eval_points(total: u64) -> Vec<u64> {
    (1..=total / EVAL_INTERVAL).map(|k| k * EVAL_INTERVAL).collect()
}

/// At each point, summarises the latest completed-episode return of every
/// run that has one.
pub fn aggregate_stats(logs: &[&RunLog], eval_points: &[u64]) -> Result<RewardStats> {
    if logs.len() < 2 {
        return Err(Error::Analysis(format!(
            "aggregating needs at least 2 runs, got {}",
            logs.len()
        )));
    }
    let points = eval_points
        .iter()
        .map(|&step| {
            let returns: Vec<f64> = logs.iter().filter_map(|l| l.latest_return_at(step)).collect();
            (step, Summary::of(&returns))
        })
        .collect();
    Ok(RewardStats { points })
}

impl RewardStats {
    /// CSV with columns step, mean, median, p2, p98, n. Missing points have
    /// empty statistic fields and n = 0.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "mean", "median", "p2", "p98", "n"])?;
        for (step, s) in &self.points {
            let row = match s {
                Some(s) => [
                    step.to_string(),
                    s.mean.to_string(),
                    s.median.to_string(),
                    s.p2.to_string(),
                    s.p98.to_string(),
                    s.n.to_string(),
                ],
                None => [step.to_string(), String::new(), String::new(), String::new(), String::new(), "0".into()],
            };
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut points = Vec::new();
        for row in rdr.records() {
            let row = row?;
            if row.len() != 6 {
                return Err(Error::Format(format!("stats row has {} fields, expected 6", row.len())));
            }
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number '{}' in stats.csv", &row[i])))
            };
            let step: u64 = row[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad step '{}' in stats.csv", &row[0])))?;
            let summary = if row[1].is_empty() {
                None
            } else {
                Some(Summary {
                    mean: num(1)?,
                    median: num(2)?,
                    p2: num(3)?,
                    p98: num(4)?,
                    n: row[5]
                        .parse()
                        .map_err(|_| Error::Format(format!("bad count '{}' in stats.csv", &row[5])))?,
                })
            };
            points.push((step, summary));
        }
        Ok(RewardStats { points })
    }
}
