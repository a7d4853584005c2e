//! Step traces as CSV.
//!
//! Header for an environment with observation dimension `d`:
//!
//! ```text
//! step,obs_0,...,obs_{d-1},action,reward,next_obs_0,...,next_obs_{d-1},done,timeout
//! ```
//!
//! `step` is the 1-based global environment step. `done` is 1 when the episode
//! ended on this step (goal, failure or step limit) and `timeout` is 1 when the
//! step limit was the cause. Reals use Rust's shortest round-trip formatting.

use std::io::{Read, Write};

use crate::envs::Obs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub obs: Obs,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Obs,
    pub done: bool,
    pub timeout: bool,
}

pub fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((0..dim).map(|i| format!("obs_{i}")));
    h.push("action".into());
    h.push("reward".into());
    h.extend((0..dim).map(|i| format!("next_obs_{i}")));
    h.push("done".into());
    h.push("timeout".into());
    h
}

pub fn write_trace<W: Write>(w: W, dim: usize, records: &[TraceRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(dim))?;
    let mut row: Vec<String> = Vec::with_capacity(2 * dim + 5);
    for r in records {
        if r.obs.len() != dim || r.next_obs.len() != dim {
            return Err(Error::Shape(format!("trace record at step {} is not {dim}-dimensional", r.step)));
        }
        row.clear();
        row.push(r.step.to_string());
        row.extend(r.obs.iter().map(|x| x.to_string()));
        row.push(r.action.to_string());
        row.push(r.reward.to_string());
        row.extend(r.next_obs.iter().map(|x| x.to_string()));
        row.push(u8::from(r.done).to_string());
        row.push(u8::from(r.timeout).to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 5 || (headers.len() - 5) % 2 != 0 {
        return Err(Error::Format("trace header has the wrong number of columns".into()));
    }
    let dim = (headers.len() - 5) / 2;
    let expected = header(dim);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format("unexpected trace header".into()));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("'{s}': {e}")));
    let parse_flag = |s: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Format(format!("'{s}' is not a 0/1 flag"))),
    };
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let step = row[0].parse::<u64>().map_err(|e| Error::Format(e.to_string()))?;
        let mut obs = [0.0; crate::envs::MAX_OBS_DIM];
        let mut next = [0.0; crate::envs::MAX_OBS_DIM];
        for i in 0..dim {
            obs[i] = parse_f(&row[1 + i])?;
            next[i] = parse_f(&row[3 + dim + i])?;
        }
        records.push(TraceRecord {
            step,
            obs: Obs::from_slice(&obs[..dim]),
            action: row[1 + dim].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            reward: parse_f(&row[2 + dim])?,
            next_obs: Obs::from_slice(&next[..dim]),
            done: parse_flag(&row[3 + 2 * dim])?,
            timeout: parse_flag(&row[4 + 2 * dim])?,
        });
    }
    Ok(records)
}
