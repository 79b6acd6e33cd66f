use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{default_horizon, gen_dataset, load_dataset, make_env, Env, ExpertConfig, MazeLayout, TaskTransform};
use crate::error::{Error, Result};
use crate::gcrl::TaskData;

/// Episodes per task in the published streams.
pub const REFERENCE_EPISODES: usize = 500;

/// Where a task's offline data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A dataset file; relative paths resolve against the stream file.
    Dataset(PathBuf),
    /// Scripted-expert episodes generated on the fly.
    Generate { episodes: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Built-in layout id (U, M, L) unless `grid` is given.
    pub layout: String,
    /// ASCII rows (`#` wall, `.` free) for a custom layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    pub transform: TaskTransform,
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl TaskSpec {
    pub fn generated(layout: &str, transform: TaskTransform, episodes: usize, seed: u64) -> Self {
        TaskSpec {
            layout: layout.to_string(),
            grid: None,
            transform,
            source: DataSource::Generate { episodes, seed },
            horizon: None,
        }
    }

    /// `U-N` style label.
    pub fn label(&self) -> String {
        format!("{}-{}", self.layout, self.transform.name())
    }

    pub fn maze(&self) -> Result<MazeLayout> {
        match &self.grid {
            Some(rows) => MazeLayout::from_ascii(&self.layout, &rows.join("\n"), 1.0),
            None => MazeLayout::builtin(&self.layout),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or_else(|| default_horizon(&self.layout))
    }
}

/// An ordered task sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
}

/// A task ready for training and evaluation.
#[derive(Debug, Clone)]
pub struct StreamTask {
    pub label: String,
    pub env: Env,
    pub data: TaskData,
}

const CANNED: [(&str, &str); 4] = [
    ("stream1", "U-N,L-N,U-PO,M-IO"),
    ("stream2", "U-PA,M-PO,M-N,M-N"),
    ("kinematic", "U-N,U-IA"),
    ("topological", "U-N,M-N"),
];

impl StreamSpec {
    pub fn canned_names() -> Vec<&'static str> {
        CANNED.iter().map(|c| c.0).collect()
    }

    /// A named built-in stream with `episodes` generated episodes per task.
    pub fn canned(name: &str, episodes: usize) -> Result<Self> {
        let (_, tasks) = CANNED
            .iter()
            .find(|c| c.0 == name)
            .ok_or_else(|| Error::Unknown {
                kind: "stream",
                name: name.to_string(),
            })?;
        Self::parse_compact(name, tasks, episodes)
    }

    /// Canned stream with the reference episode count times `scale`
    /// (at least one episode per task).
    pub fn canned_scaled(name: &str, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("episode scale {scale} must be positive")));
        }
        let episodes = ((REFERENCE_EPISODES as f64 * scale).round() as usize).max(1);
        Self::canned(name, episodes)
    }

    /// Parses `U-N,M-IA,...`. Task `j` generates `episodes` episodes with
    /// dataset seed `j`.
    pub fn parse_compact(name: &str, text: &str, episodes: usize) -> Result<Self> {
        let mut tasks = Vec::new();
        for (j, item) in text.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
            let (layout, transform) = item
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("task `{item}` is not LAYOUT-TRANSFORM")))?;
            MazeLayout::builtin(layout)?;
            tasks.push(TaskSpec::generated(layout, transform.parse()?, episodes, j as u64));
        }
        let spec = StreamSpec {
            name: name.to_string(),
            tasks,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config(format!("stream `{}` has no tasks", self.name)));
        }
        for t in &self.tasks {
            t.maze()?;
            if let DataSource::Generate { episodes: 0, .. } = t.source {
                return Err(Error::Config(format!("task {} generates no episodes", t.label())));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.tasks.iter().map(TaskSpec::label).collect()
    }

    /// Builds environments and loads or generates every dataset.
    pub fn materialize(&self, expert: &ExpertConfig, base: &Path) -> Result<Vec<StreamTask>> {
        self.validate()?;
        self.tasks
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let env = make_env(t.maze()?, t.transform, t.horizon(), j as u64)?;
                let dataset = match &t.source {
                    DataSource::Dataset(p) => {
                        let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                        let d = load_dataset(&path)?;
                        if d.transform() != t.transform {
                            return Err(Error::Config(format!(
                                "{} holds {} data but task {j} is {}",
                                path.display(),
                                d.transform().name(),
                                t.label()
                            )));
                        }
                        d
                    }
                    DataSource::Generate { episodes, seed } => gen_dataset(&env, *episodes, *seed, expert)?,
                };
                Ok(StreamTask {
                    label: t.label(),
                    env,
                    data: TaskData::from_dataset(&dataset)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canned_streams_parse() {
        for name in StreamSpec::canned_names() {
            let s = StreamSpec::canned(name, 3).unwrap();
            assert!(!s.tasks.is_empty());
        }
        let s = StreamSpec::canned("stream1", 3).unwrap();
        assert_eq!(s.labels(), ["U-N", "L-N", "U-PO", "M-IO"]);
        assert!(StreamSpec::canned("nope", 3).is_err());
    }

    #[test]
    fn episode_scale() {
        let s = StreamSpec::canned_scaled("kinematic", 0.4).unwrap();
        assert_eq!(s.tasks[0].source, DataSource::Generate { episodes: 200, seed: 0 });
        assert!(StreamSpec::canned_scaled("kinematic", 0.0).is_err());
    }

    #[test]
    fn compact_syntax_is_validated() {
        assert!(StreamSpec::parse_compact("x", "U-N,Q-N", 5).is_err());
        assert!(StreamSpec::parse_compact("x", "U-XX", 5).is_err());
        assert!(StreamSpec::parse_compact("x", "UN", 5).is_err());
        assert!(StreamSpec::parse_compact("x", "", 5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = StreamSpec::canned("stream2", 10).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<StreamSpec>(&text).unwrap(), s);
    }

    #[test]
    fn materialize_generates_data() {
        let s = StreamSpec::parse_compact("t", "U-N,U-IA", 4).unwrap();
        let tasks = s.materialize(&ExpertConfig::default(), Path::new(".")).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[1].label, "U-IA");
        assert!(tasks.iter().all(|t| t.data.n_transitions() > 0));
    }
}
