//! Residual thresholds and the healthy / under-attack decision.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CALIBRATION_LEN: usize = 1000;

/// Per-component residual bounds `beta_i = margin * max_k |r_k,i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub beta: Vec<f64>,
    pub margin: f64,
    pub calibration_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub hypothesis: Hypothesis,
    /// Zero-based indices of components with `|r_i| > beta_i`.
    pub violated: BTreeSet<usize>,
}

impl Decision {
    pub fn is_alarm(&self) -> bool {
        self.hypothesis == Hypothesis::H1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlarmEvent {
    pub step: u64,
    pub violated: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlarmReport {
    pub events: Vec<AlarmEvent>,
    /// First alarm at or after the onset, minus the onset.
    pub detection_delay: Option<u64>,
}

/// Thresholds from a fault-free residual history.
pub fn calibrate<R: AsRef<[f64]>>(history: &[R], margin: f64) -> Result<ThresholdVector> {
    let first = history
        .first()
        .ok_or_else(|| Error::Calibration("empty residual history".to_string()))?;
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::Calibration(format!("margin {margin} must be > 0")));
    }
    let dim = first.as_ref().len();
    let mut beta = vec![0.0f64; dim];
    for r in history {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        for (b, v) in beta.iter_mut().zip(r) {
            if !v.is_finite() {
                return Err(Error::Calibration(format!("non-finite residual {v}")));
            }
            *b = b.max(v.abs());
        }
    }
    for b in &mut beta {
        *b *= margin;
    }
    Ok(ThresholdVector {
        beta,
        margin,
        calibration_len: history.len(),
    })
}

/// Component `i` is violated iff `|r_i| > beta_i`; any violation means H1.
pub fn decide(r: &[f64], thresholds: &ThresholdVector) -> Decision {
    let violated: BTreeSet<usize> = r
        .iter()
        .zip(&thresholds.beta)
        .enumerate()
        // NaN residuals count as violations.
        .filter(|(_, (v, b))| !(v.abs() <= **b))
        .map(|(i, _)| i)
        .collect();
    let hypothesis = if violated.is_empty() {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    };
    Decision {
        hypothesis,
        violated,
    }
}

/// One event per H1 decision. `decisions` pairs each decision with its step.
pub fn alarm_stream<'a, I>(decisions: I, onset: Option<u64>) -> AlarmReport
where
    I: IntoIterator<Item = (u64, &'a Decision)>,
{
    let events: Vec<AlarmEvent> = decisions
        .into_iter()
        .filter(|(_, d)| d.is_alarm())
        .map(|(step, d)| AlarmEvent {
            step,
            violated: d.violated.clone(),
        })
        .collect();
    let detection_delay = onset.and_then(|t0| {
        events
            .iter()
            .find(|e| e.step >= t0)
            .map(|e| e.step - t0)
    });
    AlarmReport {
        events,
        detection_delay,
    }
}

const COMPONENT_NAMES: [&str; 3] = ["tank1", "tank2", "tank3"];

fn component_name(i: usize) -> String {
    COMPONENT_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("c{}", i + 1))
}

impl ThresholdVector {
    /// Text form: one `beta.<component> = value` line per component plus the
    /// margin and calibration length, all as `key = value`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# residual thresholds\n");
        out.push_str(&format!("calibration_len = {}\n", self.calibration_len));
        out.push_str(&format!("margin = {:?}\n", self.margin));
        for (i, b) in self.beta.iter().enumerate() {
            out.push_str(&format!("beta.{} = {:?}\n", component_name(i), b));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut margin = None;
        let mut calibration_len = None;
        let mut beta: Vec<Option<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Config(format!("threshold file line {}: {raw:?}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(bad)?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "margin" => margin = Some(value.parse::<f64>().map_err(|_| bad())?),
                "calibration_len" => {
                    calibration_len = Some(value.parse::<usize>().map_err(|_| bad())?)
                }
                _ => {
                    let name = key.strip_prefix("beta.").ok_or_else(bad)?;
                    let idx = (0..COMPONENT_NAMES.len().max(beta.len() + 1))
                        .find(|&i| component_name(i) == name)
                        .ok_or_else(bad)?;
                    let v = value.parse::<f64>().map_err(|_| bad())?;
                    if !(v >= 0.0) {
                        return Err(bad());
                    }
                    if beta.len() <= idx {
                        beta.resize(idx + 1, None);
                    }
                    beta[idx] = Some(v);
                }
            }
        }
        let beta = beta
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                b.ok_or_else(|| Error::Config(format!("missing beta.{}", component_name(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        if beta.is_empty() {
            return Err(Error::Config("threshold file has no beta entries".to_string()));
        }
        let calibration_len = calibration_len
            .filter(|&t| t >= 1)
            .ok_or_else(|| Error::Config("calibration_len missing or zero".to_string()))?;
        Ok(ThresholdVector {
            beta,
            margin: margin.ok_or_else(|| Error::Config("margin missing".to_string()))?,
            calibration_len,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
