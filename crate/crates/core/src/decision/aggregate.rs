use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::NON_STROKE;
use crate::error::{Error, Result};

/// Class probabilities of one window `[start, start + length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub start: usize,
    pub length: usize,
    pub probs: Vec<f64>,
}

impl WindowPrediction {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidArgument("window length must be positive".into()));
        }
        let sum: f64 = self.probs.iter().sum();
        if self.probs.is_empty() || self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "window at {}: probabilities {:?} are not a distribution",
                self.start, self.probs
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        self.start as f64 + self.length as f64 / 2.0
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Probability mass outside the non-stroke class.
    pub fn stroke_probability(&self) -> f64 {
        1.0 - self.probs.get(NON_STROKE).copied().unwrap_or(0.0)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How overlapping window predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionKind {
    /// The single window centered nearest the reference point.
    NoWindow,
    /// Average weighted by a Gaussian of the distance between window
    /// centers and the reference point.
    Gaussian { sigma: f64 },
    Mean,
    /// Majority over per-window argmaxes.
    Vote,
    /// Per-frame stroke vote over sliding windows; aggregates clips like
    /// [`DecisionKind::Vote`].
    VoteSliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionMethod {
    #[serde(flatten)]
    pub kind: DecisionKind,
    /// Frames between consecutive sliding windows.
    pub stride: usize,
}

impl DecisionMethod {
    pub fn new(kind: DecisionKind, stride: usize) -> Result<Self> {
        let m = DecisionMethod { kind, stride };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if let DecisionKind::Gaussian { sigma } = self.kind {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::config("sigma", format!("must be positive and finite, got {sigma}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionKind::NoWindow => f.write_str("no_window"),
            DecisionKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            DecisionKind::Mean => f.write_str("mean"),
            DecisionKind::Vote => f.write_str("vote"),
            DecisionKind::VoteSliding => f.write_str("vote_sliding"),
        }
    }
}

impl DecisionKind {
    /// Parses `no_window`, `gaussian[:sigma]`, `mean`, `vote` or
    /// `vote_sliding`; a bare `gaussian` takes `default_sigma`.
    pub fn parse(text: &str, default_sigma: f64) -> Result<Self> {
        let lower = text.trim().to_ascii_lowercase().replace('-', "_");
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let kind = match (name, arg) {
            ("no_window", None) => DecisionKind::NoWindow,
            ("mean", None) => DecisionKind::Mean,
            ("vote", None) => DecisionKind::Vote,
            ("vote_sliding", None) => DecisionKind::VoteSliding,
            ("gaussian", None) => DecisionKind::Gaussian { sigma: default_sigma },
            ("gaussian", Some(a)) => DecisionKind::Gaussian {
                sigma: a
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad gaussian sigma `{a}`")))?,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown decision method `{text}`"))),
        };
        DecisionMethod { kind, stride: 1 }.validate()?;
        Ok(kind)
    }
}

impl FromStr for DecisionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 25.0)
    }
}

/// Result of aggregating the windows of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDecision {
    pub label: usize,
    /// Combined distribution; vote fractions for the voting methods.
    pub probs: Vec<f64>,
}

fn check_preds(preds: &[WindowPrediction]) -> Result<usize> {
    let first = preds
        .first()
        .ok_or_else(|| Error::InvalidArgument("no window predictions to aggregate".into()))?;
    let k = first.probs.len();
    for p in preds {
        p.validate()?;
        if p.probs.len() != k {
            return Err(Error::InvalidArgument(format!(
                "window at {} has {} classes, expected {k}",
                p.start,
                p.probs.len()
            )));
        }
    }
    Ok(k)
}

/// Normalized Gaussian weights of distances from `point`, computed relative
/// to the nearest window so they never all underflow.
fn gaussian_weights(preds: &[WindowPrediction], point: f64, sigma: f64) -> Vec<f64> {
    let d2: Vec<f64> = preds.iter().map(|p| (p.center() - point).powi(2)).collect();
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d2.iter().map(|d| (-(d - min) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn nearest(preds: &[WindowPrediction], point: f64) -> usize {
    let mut best = 0;
    for (i, p) in preds.iter().enumerate() {
        if (p.center() - point).abs() < (preds[best].center() - point).abs() {
            best = i;
        }
    }
    best
}

/// Combines the windows covering one stroke whose midpoint is `midpoint`.
pub fn aggregate_clip(preds: &[WindowPrediction], kind: DecisionKind, midpoint: f64) -> Result<ClipDecision> {
    let k = check_preds(preds)?;
    let probs = match kind {
        DecisionKind::NoWindow => preds[nearest(preds, midpoint)].probs.clone(),
        DecisionKind::Mean => {
            let mut acc = vec![0.0; k];
            for p in preds {
                for (a, &v) in acc.iter_mut().zip(&p.probs) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / preds.len() as f64).collect()
        }
        DecisionKind::Gaussian { sigma } => {
            let w = gaussian_weights(preds, midpoint, sigma);
            let mut acc = vec![0.0; k];
            for (p, &w) in preds.iter().zip(&w) {
                for (a, &v) in acc.iter_mut().zip(&p.probs) {
                    *a += w * v;
                }
            }
            acc
        }
        DecisionKind::Vote | DecisionKind::VoteSliding => {
            let mut votes = vec![0usize; k];
            for p in preds {
                votes[p.argmax()] += 1;
            }
            let label = votes.iter().enumerate().fold(0, |b, (i, &v)| if v > votes[b] { i } else { b });
            let probs = votes.iter().map(|&v| v as f64 / preds.len() as f64).collect();
            return Ok(ClipDecision { label, probs });
        }
    };
    Ok(ClipDecision {
        label: argmax(&probs),
        probs,
    })
}

/// Per-frame fraction of covering windows whose argmax is a stroke class.
/// Frames no window covers get 0.
pub fn vote_sliding_window(preds: &[WindowPrediction], num_frames: usize) -> Vec<f64> {
    let mut covered = vec![0i64; num_frames + 1];
    let mut stroke = vec![0i64; num_frames + 1];
    for p in preds {
        let (s, e) = (p.start.min(num_frames), p.end().min(num_frames));
        covered[s] += 1;
        covered[e] -= 1;
        if p.argmax() != NON_STROKE {
            stroke[s] += 1;
            stroke[e] -= 1;
        }
    }
    let (mut c, mut v) = (0, 0);
    (0..num_frames)
        .map(|t| {
            c += covered[t];
            v += stroke[t];
            if c == 0 {
                0.0
            } else {
                v as f64 / c as f64
            }
        })
        .collect()
}

/// Per-frame stroke score under any decision method. Each frame combines
/// the windows covering it, using the frame itself as reference point.
pub fn frame_curve(preds: &[WindowPrediction], num_frames: usize, kind: DecisionKind) -> Vec<f64> {
    if matches!(kind, DecisionKind::Vote | DecisionKind::VoteSliding) {
        return vote_sliding_window(preds, num_frames);
    }
    let mut sorted: Vec<&WindowPrediction> = preds.iter().collect();
    sorted.sort_by_key(|p| p.start);
    let mut out = vec![0.0; num_frames];
    let mut covering: Vec<WindowPrediction> = Vec::new();
    let mut next = 0;
    for (t, slot) in out.iter_mut().enumerate() {
        while next < sorted.len() && sorted[next].start <= t {
            covering.push(sorted[next].clone());
            next += 1;
        }
        covering.retain(|p| p.end() > t);
        if covering.is_empty() {
            continue;
        }
        let point = t as f64 + 0.5;
        *slot = match kind {
            DecisionKind::NoWindow => covering[nearest(&covering, point)].stroke_probability(),
            DecisionKind::Mean => covering.iter().map(|p| p.stroke_probability()).sum::<f64>() / covering.len() as f64,
            DecisionKind::Gaussian { sigma } => gaussian_weights(&covering, point, sigma)
                .iter()
                .zip(&covering)
                .map(|(w, p)| w * p.stroke_probability())
                .sum(),
            DecisionKind::Vote | DecisionKind::VoteSliding => unreachable!(),
        };
    }
    out
}
