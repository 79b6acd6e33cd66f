use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::env::{achieved_goal, Env};
use super::expert::{expert_episode, ExpertConfig};
use super::transform::TaskTransform;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::child;

pub const FORMAT_VERSION: u32 = 1;
const MAX_ATTEMPTS: u64 = 1000;

/// One recorded transition, in the agent's (transformed) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub o: Vec<f64>,
    pub a: Vec<f64>,
    pub r: u8,
    pub no: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub goal: [f64; 2],
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// φ(s_0), …, φ(s_T): one more entry than there are steps.
    pub fn achieved(&self, transform: TaskTransform) -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = self
            .steps
            .iter()
            .map(|s| achieved_goal(&transform.unobserve(&s.o)))
            .collect();
        if let Some(last) = self.steps.last() {
            out.push(achieved_goal(&transform.unobserve(&last.no)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub layout: String,
    pub transform: TaskTransform,
    pub seed: u64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn transform(&self) -> TaskTransform {
        self.header.transform
    }

    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn mean_length(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.n_transitions() as f64 / self.episodes.len() as f64
    }

    /// Keeps only the first `n` episodes.
    pub fn truncated(&self, n: usize) -> Dataset {
        let episodes: Vec<Episode> = self.episodes.iter().take(n).cloned().collect();
        Dataset {
            header: DatasetHeader {
                n_episodes: episodes.len(),
                ..self.header.clone()
            },
            episodes,
        }
    }
}

/// `n_episodes` successful expert episodes. Episode `i` draws from its own
/// stream `child(seed, [i, attempt])`; failed attempts are resampled.
pub fn gen_dataset(env: &Env, n_episodes: usize, seed: u64, expert: &ExpertConfig) -> Result<Dataset> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be at least 1".into()));
    }
    let episodes = exec::map_indices(n_episodes, |i| {
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = child(seed, &[i as u64, attempt]);
            if let Ok(ep) = expert_episode(env, expert, &mut rng) {
                return Ok(ep);
            }
        }
        Err(Error::Unreachable)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            layout: env.layout.id.clone(),
            transform: env.transform,
            seed,
            n_episodes,
        },
        episodes,
    })
}

/// JSON Lines: a header object, then one episode per line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &dataset.header)?;
    w.write_all(b"\n")?;
    for ep in &dataset.episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset<R: BufRead>(reader: R, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate();
    let header: DatasetHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| parse_err(1, e.to_string()))?
        }
        None => return Err(parse_err(1, "missing header".into())),
    };
    if header.format_version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format version {}", header.format_version),
        ));
    }
    let mut episodes = Vec::with_capacity(header.n_episodes);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        episodes.push(ep);
    }
    if episodes.len() != header.n_episodes {
        return Err(parse_err(
            episodes.len() + 2,
            format!("header announces {} episodes, found {}", header.n_episodes, episodes.len()),
        ));
    }
    Ok(Dataset { header, episodes })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, reward, MazeLayout};

    fn small(transform: TaskTransform) -> Dataset {
        let env = make_env(MazeLayout::builtin("U").unwrap(), transform, 300, 0).unwrap();
        gen_dataset(&env, 20, 42, &ExpertConfig::default()).unwrap()
    }

    #[test]
    fn all_episodes_succeed_and_rewards_are_consistent() {
        for t in TaskTransform::ALL {
            let d = small(t);
            assert_eq!(d.episodes.len(), 20);
            for ep in &d.episodes {
                assert_eq!(ep.steps.last().unwrap().r, 1);
                let pos = ep.achieved(t);
                for (k, s) in ep.steps.iter().enumerate() {
                    assert_eq!(s.r as f64, reward(pos[k + 1], ep.goal));
                    if k + 1 < ep.steps.len() {
                        assert_eq!(s.no, ep.steps[k + 1].o);
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let d = small(TaskTransform::PO);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn malformed_line_is_reported() {
        let d = small(TaskTransform::N).truncated(2);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{not json}\n");
        let err = read_dataset(text.as_bytes(), Path::new("x.jsonl")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::N, 300, 0).unwrap();
        assert!(gen_dataset(&env, 0, 0, &ExpertConfig::default()).is_err());
    }
}
