//! Run directories.
//!
//! ```text
//! DIR/config.json          resolved TrainConfig
//! DIR/version.txt          program name and version that wrote the run
//! DIR/episodes.csv         start_step,length,return
//! DIR/transitions.csv      full step trace (see envs::trace)
//! DIR/snapshot_<step>.bin  online network after <step> env steps
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::envs::trace::{read_trace, write_trace};
use crate::error::{Error, Result};
use crate::experiment::config::TrainConfig;
use crate::experiment::run::{EpisodeRecord, RunLog};
use crate::experiment::stats::RewardStats;
use crate::nn::MlpParams;

pub fn snapshot_file_name(step: u64) -> String {
    format!("snapshot_{step}.bin")
}

pub fn write_episodes<W: Write>(w: W, episodes: &[EpisodeRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["start_step", "length", "return"])?;
    for e in episodes {
        out.write_record([e.start_step.to_string(), e.length.to_string(), e.ret.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut episodes = Vec::new();
    for row in rdr.deserialize() {
        let (start_step, length, ret): (u64, u64, f64) = row?;
        if start_step == 0 || length == 0 {
            return Err(Error::Format(format!(
                "episode row ({start_step}, {length}) has a zero step or length"
            )));
        }
        episodes.push(EpisodeRecord { start_step, length, ret });
    }
    Ok(episodes)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))
}

pub fn write_config(dir: &Path, config: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), config.to_json() + "\n")?;
    Ok(())
}

pub fn save_run(dir: &Path, log: &RunLog) -> Result<()> {
    write_config(dir, &log.config)?;
    fs::write(dir.join("version.txt"), format!("{}\n", log.version))?;

    let mut w = create(&dir.join("episodes.csv"))?;
    write_episodes(&mut w, &log.episodes)?;
    w.flush()?;

    let mut w = create(&dir.join("transitions.csv"))?;
    write_trace(&mut w, log.config.env.obs_dim(), &log.trace)?;
    w.flush()?;

    for (step, params) in &log.snapshots {
        let mut w = create(&dir.join(snapshot_file_name(*step)))?;
        params.write_snapshot(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<RunLog> {
    let mut text = String::new();
    open(&dir.join("config.json"))?.read_to_string(&mut text)?;
    let config = TrainConfig::from_json(&text)?;
    let version = fs::read_to_string(dir.join("version.txt"))
        .map(|v| v.trim_end().to_string())
        .unwrap_or_default();
    let episodes = read_episodes(open(&dir.join("episodes.csv"))?)?;
    let trace = read_trace(open(&dir.join("transitions.csv"))?)?;

    let mut snapshots = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(step) = name
            .to_str()
            .and_then(|n| n.strip_prefix("snapshot_"))
            .and_then(|n| n.strip_suffix(".bin"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        let params = MlpParams::read_snapshot(open(&dir.join(snapshot_file_name(step)))?)?;
        snapshots.insert(step, params);
    }
    Ok(RunLog {
        config,
        episodes,
        trace,
        snapshots,
        version,
    })
}

pub fn save_stats(path: &Path, stats: &RewardStats) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = create(path)?;
    stats.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_stats(path: &Path) -> Result<RewardStats> {
    RewardStats::read_csv(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;
    use crate::experiment::config::Architecture;
    use crate::experiment::run::run_training;

    #[test]
    fn run_directory_round_trip() {
        let mut c = TrainConfig::defaults(EnvId::MountainCar).with_architecture(Architecture::Relu1);
        c.total_env_steps = 450;
        c.batch_size = 16;
        c.learn_start = 16;
        c.snapshot_steps = vec![300, 450];
        let log = run_training(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_run(dir.path(), &log).unwrap();
        let back = load_run(dir.path()).unwrap();
        assert_eq!(back, log);
        let episodes = fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
        assert_eq!(episodes, "start_step,length,return\n1,200,-200\n201,200,-200\n");
    }

    #[test]
    fn rejects_bad_episode_rows() {
        assert!(read_episodes(&b"start_step,length,return\n0,5,-5\n"[..]).is_err());
        assert!(read_episodes(&b"start_step,length,return\n1,x,-5\n"[..]).is_err());
    }

    #[test]
    fn missing_directory_is_reported() {
        let err = load_run(Path::new("/nonexistent/run")).unwrap_err();
        assert!(err.to_string().contains("config.json"), "{err}");
    }
}
