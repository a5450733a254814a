//! Files written by a run: per-step CSV, summary, thresholds, packet capture and
//! plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunLog, RunPhase, StepRecord, Summary};
use crate::detector::{Hypothesis, ThresholdVector};
use crate::error::Result;

pub const CSV_HEADER: [&str; 17] = [
    "step",
    "phase",
    "x1",
    "x2",
    "x3",
    "y1",
    "y2",
    "y3",
    "r1",
    "r2",
    "r3",
    "beta1",
    "beta2",
    "beta3",
    "decision",
    "verdict",
    "adversary_action",
];

/// One row of the run CSV. Measurement, residual and threshold fields are empty
/// when the monitor had nothing to work with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub step: u64,
    pub phase: String,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
    pub y3: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub decision: Option<String>,
    pub verdict: String,
    pub adversary_action: String,
}

impl CsvRow {
    fn from_record(rec: &StepRecord, thresholds: &ThresholdVector) -> Self {
        let y = rec.y_decoded.map(|v| v.map(Some)).unwrap_or([None; 3]);
        let r = rec.residual.map(|v| v.map(Some)).unwrap_or([None; 3]);
        let beta = match rec.phase {
            RunPhase::Calibration => [None; 3],
            RunPhase::Operation => {
                let b = &thresholds.beta;
                [b.first().copied(), b.get(1).copied(), b.get(2).copied()]
            }
        };
        CsvRow {
            step: rec.step,
            phase: rec.phase.as_str().to_string(),
            x1: rec.x_true[0],
            x2: rec.x_true[1],
            x3: rec.x_true[2],
            y1: y[0],
            y2: y[1],
            y3: y[2],
            r1: r[0],
            r2: r[1],
            r3: r[2],
            beta1: beta[0],
            beta2: beta[1],
            beta3: beta[2],
            decision: rec.decision.as_ref().map(|d| {
                match d.hypothesis {
                    Hypothesis::H0 => "H0",
                    Hypothesis::H1 => "H1",
                }
                .to_string()
            }),
            verdict: rec.verdict.as_str().to_string(),
            adversary_action: rec.adversary_action.as_str().to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CaptureRow<'a> {
    step: u64,
    direction: &'a str,
    seq: u32,
    payload_hex: &'a str,
    verdict: &'a str,
    adversary_action: &'a str,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "none".to_string())
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "alarms = {}", self.alarms);
        let _ = writeln!(s, "post_onset_alarms = {}", self.post_onset_alarms);
        let _ = writeln!(s, "false_alarms = {}", self.false_alarms);
        let _ = writeln!(s, "false_alarm_rate = {}", self.false_alarm_rate);
        let _ = writeln!(s, "attack_onset = {}", opt(self.onset));
        let _ = writeln!(s, "detection_delay = {}", opt(self.detection_delay));
        let _ = writeln!(s, "full_violation_delay = {}", opt(self.full_violation_delay));
        let _ = writeln!(s, "dropped_packets = {}", self.dropped_packets);
        let _ = writeln!(s, "lost = {}", self.lost);
        let _ = writeln!(s, "corrupt = {}", self.corrupt);
        let _ = writeln!(s, "stale = {}", self.stale);
        let _ = writeln!(s, "gate_rejections = {}", self.gate_rejections);
        s
    }
}

impl RunLog {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .map(|r| CsvRow::from_record(r, &self.thresholds))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.csv_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_capture(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.capture {
            w.serialize(CaptureRow {
                step: c.step,
                direction: c.direction,
                seq: c.seq,
                payload_hex: &c.payload_hex,
                verdict: c.verdict,
                adversary_action: c.adversary_action.as_str(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Gnuplot-ready columns `step r beta -beta` per tank, the onset marker and a
    /// script drawing all three panels.
    pub fn write_plot_data(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for i in 0..3 {
            let beta = self.thresholds.beta.get(i).copied().unwrap_or(f64::NAN);
            let mut s = String::from("# step r beta -beta\n");
            for rec in &self.records {
                if rec.phase != RunPhase::Operation {
                    continue;
                }
                if let Some(r) = rec.residual {
                    let _ = writeln!(s, "{} {:e} {:e} {:e}", rec.step, r[i], beta, -beta);
                }
            }
            fs::write(dir.join(format!("residual_tank{}.dat", i + 1)), s)?;
        }
        let onset = match self.summary.onset {
            Some(t) => format!("{t}\n"),
            None => String::new(),
        };
        fs::write(dir.join("onset.dat"), onset)?;
        fs::write(dir.join("plot_residuals.gp"), PLOT_SCRIPT)?;
        Ok(())
    }

    /// Writes `run.csv`, `summary.txt`, `thresholds.txt`, `capture.csv` and
    /// `plot/` under `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(&dir.join("run.csv"))?;
        fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        self.thresholds.save(&dir.join("thresholds.txt"))?;
        self.write_capture(&dir.join("capture.csv"))?;
        self.write_plot_data(&dir.join("plot"))
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

const PLOT_SCRIPT: &str = r#"# gnuplot -e "set terminal pngcairo size 900,900; set output 'residuals.png'" plot_residuals.gp
onset = system("cat onset.dat")
set multiplot layout 3,1
do for [i=1:3] {
    set title sprintf("tank %d", i)
    set xlabel "step"
    set ylabel "residual (m)"
    if (strlen(onset) > 0) {
        set arrow 1 from first real(onset), graph 0 to first real(onset), graph 1 nohead dt 2
    }
    plot sprintf("residual_tank%d.dat", i) using 1:2 with lines title "r", \
         "" using 1:3 with lines lc rgb "red" title "beta", \
         "" using 1:4 with lines lc rgb "red" notitle
}
unset multiplot
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{run_scenario, ScenarioConfig};

    #[test]
    fn csv_roundtrip() {
        let cfg = ScenarioConfig {
            horizon: 300,
            calibration_len: 200,
            ..Default::default()
        };
        let log = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        log.write_all(dir.path()).unwrap();

        let text = fs::read_to_string(dir.path().join("run.csv")).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header, CSV_HEADER);

        let rows = read_csv(&dir.path().join("run.csv")).unwrap();
        assert_eq!(rows, log.csv_rows());
        assert_eq!(rows.len(), 300);
        assert!(rows[..200].iter().all(|r| r.decision.is_none()));
        assert!(rows[200..].iter().all(|r| r.beta1.is_some()));

        for f in ["summary.txt", "thresholds.txt", "capture.csv", "plot/residual_tank3.dat", "plot/plot_residuals.gp"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = ThresholdVector::load(&dir.path().join("thresholds.txt")).unwrap();
        assert_eq!(back, log.thresholds);
    }
}
