use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::InputKind;
use crate::decision::{DecisionKind, DecisionMethod};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Streams};
use crate::optim::OptimizerConfig;
use crate::pose::SkeletonSpec;

/// Size preset that supplies every default a run config leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 32×32×16 windows, small network, 4 classes.
    Desk,
    /// 120×120×100 windows, full network, 21 classes.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::InvalidArgument(format!("unknown profile `{s}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// One label per annotated stroke.
    Classify,
    /// Stroke vs non-stroke windows, turned into segments at inference.
    Detect,
}

/// Everything a training or inference run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Dataset root holding `manifest.json`; relative paths resolve against
    /// the config file's directory.
    pub dataset: PathBuf,
    /// Restricts training to these videos; all manifest videos otherwise.
    pub videos: Option<Vec<String>>,
    /// Input representation per branch.
    pub streams: Vec<InputKind>,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Share of videos held out to select the best checkpoint.
    pub validation_fraction: f64,
    /// Non-stroke windows per stroke window when training detection.
    pub negative_ratio: usize,
    pub decision: DecisionMethod,
    /// Per-frame curve threshold for segment extraction.
    pub threshold: f64,
    /// Shortest segment kept, in frames.
    pub min_length: usize,
    pub seed: u64,
    /// Ends training once an epoch's train accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    pub skeleton: SkeletonSpec,
}

impl RunConfig {
    pub fn preset(profile: Profile) -> Self {
        match profile {
            Profile::Desk => RunConfig {
                task: Task::Classify,
                dataset: PathBuf::from("."),
                videos: None,
                streams: vec![InputKind::Rgb, InputKind::Pose],
                model: ModelConfig::desk(4),
                optimizer: OptimizerConfig {
                    epochs: 500,
                    ..OptimizerConfig::default()
                },
                batch_size: 8,
                validation_fraction: 0.0,
                negative_ratio: 1,
                decision: DecisionMethod {
                    kind: DecisionKind::VoteSliding,
                    stride: 4,
                },
                threshold: 0.5,
                min_length: 2,
                seed: 0,
                stop_at_train_accuracy: None,
                skeleton: SkeletonSpec::default(),
            },
            Profile::Paper => RunConfig {
                streams: vec![InputKind::Rgb, InputKind::Prgb],
                model: ModelConfig::paper(21),
                optimizer: OptimizerConfig::default(),
                validation_fraction: 0.2,
                decision: DecisionMethod {
                    kind: DecisionKind::VoteSliding,
                    stride: 10,
                },
                min_length: 20,
                ..Self::preset(Profile::Desk)
            },
        }
    }

    /// Overlays a (possibly partial) JSON config onto the profile preset.
    /// Nested objects merge key by key; arrays and scalars replace.
    pub fn from_json(text: &str, profile: Profile) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Format("run config must be a JSON object".into()));
        }
        let mut base = serde_json::to_value(Self::preset(profile))?;
        merge(&mut base, user);
        let cfg: RunConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.decision.validate()?;
        self.skeleton.validate()?;
        let want = match self.model.streams {
            Streams::One => 1,
            Streams::Two => 2,
        };
        if self.streams.len() != want {
            return Err(Error::config(
                "streams",
                format!("model has {want} branch(es) but {} inputs are listed", self.streams.len()),
            ));
        }
        if self.model.input_size.channels != 3 {
            return Err(Error::config("model.input_size.channels", "frames are RGB, expected 3"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold", "must lie in (0, 1)"));
        }
        if self.min_length == 0 {
            return Err(Error::config("min_length", "must be at least 1"));
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config("stop_at_train_accuracy", "must lie in (0, 1]"));
            }
        }
        if self.task == Task::Detect {
            if self.model.num_classes != 2 {
                return Err(Error::config(
                    "model.num_classes",
                    "detection trains a stroke / non-stroke model and needs exactly 2 classes",
                ));
            }
            if self.negative_ratio == 0 {
                return Err(Error::config("negative_ratio", "detection needs non-stroke windows"));
            }
        }
        Ok(())
    }

    /// Window length in frames.
    pub fn window(&self) -> usize {
        self.model.input_size.frames
    }

    /// Default σ of the Gaussian decision method: a quarter window.
    pub fn default_sigma(&self) -> f64 {
        self.window() as f64 / 4.0
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
