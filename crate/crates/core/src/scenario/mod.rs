//! Closed-loop simulation: plant → sensors → coded link (with the adversary's tap)
//! → monitor (EKF + detector) → controller → actuators.
//!
//! Steps `[0, T)` run healthy and calibrate the thresholds; from step `T` the
//! adversary is armed and starts substituting frames once it sees steady state.

mod config;
mod output;

pub use config::{EstimatorConfig, ScenarioConfig};
pub use output::{read_csv, CsvRow, CSV_HEADER};

use nalgebra::{Matrix3, Vector3};

use crate::adversary::{Adversary, AdversaryAction, AttackMode};
use crate::channel::{encode, Interceptor, Link, Packet, Receiver};
use crate::detector::{alarm_stream, calibrate, decide, Decision, ThresholdVector};
use crate::error::{Error, Result};
use crate::estimator::{Ekf, EkfState, GateConfig};
use crate::noise::{to_matrix, GaussianNoise};
use crate::plant::{self, level_controller, ActuatorInput, ControllerParams, ThreeTankModel};

/// Noise streams carved out of one seed.
const PROCESS_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunPhase {
    Calibration,
    Operation,
}

impl RunPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            RunPhase::Calibration => "calibration",
            RunPhase::Operation => "operation",
        }
    }
}

/// What happened to the frame of one step on its way to the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Lost,
    Corrupt,
    Stale,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Lost => "lost",
            Verdict::Corrupt => "corrupt",
            Verdict::Stale => "stale",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub phase: RunPhase,
    pub x_true: [f64; 3],
    pub y_plain: [f64; 3],
    /// Payload as sent by the concentrator (coded when coding is on).
    pub payload_sent: Vec<f64>,
    /// Payload as delivered to the monitor, if anything arrived.
    pub payload_delivered: Option<Vec<f64>>,
    pub y_decoded: Option<[f64; 3]>,
    pub xhat: [f64; 3],
    pub residual: Option<[f64; 3]>,
    pub gate_statistic: Option<f64>,
    pub gate_accepted: Option<bool>,
    /// Detector output; only during operation and only when a measurement arrived.
    pub decision: Option<Decision>,
    pub verdict: Verdict,
    pub adversary_action: AdversaryAction,
    pub command: ActuatorInput,
}

/// One line of the packet capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureEntry {
    pub step: u64,
    pub direction: &'static str,
    pub seq: u32,
    pub payload_hex: String,
    pub verdict: &'static str,
    pub adversary_action: AdversaryAction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub steps: u64,
    /// H1 decisions during operation.
    pub alarms: u64,
    /// H1 decisions at or after the onset.
    pub post_onset_alarms: u64,
    pub onset: Option<u64>,
    pub detection_delay: Option<u64>,
    /// Steps after onset until every component has been violated at least once.
    pub full_violation_delay: Option<u64>,
    /// H1 decisions during operation with no attack in progress.
    pub false_alarms: u64,
    pub false_alarm_rate: f64,
    pub dropped_packets: u64,
    pub lost: u64,
    pub corrupt: u64,
    pub stale: u64,
    pub gate_rejections: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub thresholds: ThresholdVector,
    pub capture: Vec<CaptureEntry>,
    pub summary: Summary,
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Step-by-step state of one run.
pub struct Simulation {
    cfg: ScenarioConfig,
    controller: ControllerParams,
    process_noise: GaussianNoise,
    measurement_noise: GaussianNoise,
    link: Link,
    receiver: Receiver,
    adversary: Adversary,
    ekf: Ekf<ThreeTankModel, 3>,
    estimate: EkfState<3>,
    x: Vector3<f64>,
    command: ActuatorInput,
    step: u64,
    calibration_residuals: Vec<[f64; 3]>,
    thresholds: Option<ThresholdVector>,
    preset_thresholds: bool,
    records: Vec<StepRecord>,
    capture: Vec<CaptureEntry>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let controller = cfg.resolved_controller()?;
        let q = to_matrix(&cfg.noise.q);
        let r = to_matrix(&cfg.noise.r);
        let channel = cfg.channel_config();
        let ekf = Ekf::new(
            ThreeTankModel { params: cfg.plant },
            q,
            r,
            GateConfig {
                chi2_threshold: cfg.estimator.chi2_threshold,
            },
        )
        .with_residual_mode(cfg.estimator.residual_mode);
        let x0 = cfg.initial_levels();
        let xhat0 = cfg
            .estimator
            .initial_estimate
            .map(Vector3::from)
            .unwrap_or(x0);
        let p0 = Matrix3::identity() * cfg.estimator.initial_variance;
        Ok(Simulation {
            controller,
            process_noise: GaussianNoise::new(&q, cfg.noise.rng_seed, PROCESS_STREAM),
            measurement_noise: GaussianNoise::new(&r, cfg.noise.rng_seed, MEASUREMENT_STREAM),
            link: Link::new(&channel),
            receiver: Receiver::new(channel),
            adversary: Adversary::new(cfg.attack.clone()),
            ekf,
            estimate: EkfState::prior(xhat0, p0),
            x: x0,
            // Before the first measurement the actuators sit at the nominal openings.
            command: ActuatorInput::new(
                controller.v12_nominal.unwrap_or(0.5),
                controller.v23_nominal.unwrap_or(0.5),
                0.0,
            ),
            step: 0,
            calibration_residuals: Vec::new(),
            thresholds: None,
            preset_thresholds: false,
            records: Vec::with_capacity(cfg.horizon),
            capture: Vec::new(),
            cfg,
        })
    }

    /// Uses externally calibrated thresholds instead of computing them at step `T`.
    pub fn with_thresholds(mut self, thresholds: ThresholdVector) -> Self {
        self.thresholds = Some(thresholds);
        self.preset_thresholds = true;
        self
    }

    pub fn thresholds(&self) -> Option<&ThresholdVector> {
        self.thresholds.as_ref()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    fn phase(&self) -> RunPhase {
        if (self.step as usize) < self.cfg.calibration_len {
            RunPhase::Calibration
        } else {
            RunPhase::Operation
        }
    }

    /// Advances one transmission step.
    pub fn advance(&mut self) -> Result<()> {
        let phase = self.phase();
        let seq = u32::try_from(self.step)
            .map_err(|_| Error::Config("sequence space exhausted".to_string()))?;
        if phase == RunPhase::Operation {
            self.adversary.arm();
        }

        // Plant.
        if self.step > 0 {
            let w = self.process_noise.sample();
            self.x = plant::step(&self.x, &self.command, &self.cfg.plant, Some(&w));
        }
        let v = self.measurement_noise.sample();
        let y = plant::measure(&self.x, Some(&v));

        // Concentrator → link → monitor.
        let channel = self.cfg.channel_config();
        let sent = encode(y.as_slice(), seq, &channel)?;
        self.capture.push(CaptureEntry {
            step: self.step,
            direction: "sent",
            seq: sent.seq,
            payload_hex: sent.payload_hex(),
            verdict: "",
            adversary_action: AdversaryAction::Inactive,
        });
        let tap: &mut dyn Interceptor = &mut self.adversary;
        let delivered = self.link.transmit(sent.clone(), Some(tap));
        let action = match &delivered {
            Some(_) => self.adversary.last_action(),
            None if self.cfg.attack.mode == AttackMode::None => AdversaryAction::Inactive,
            None if self.adversary.onset_seq().is_some() => self.adversary.last_action(),
            None => AdversaryAction::Observe,
        };

        let (verdict, y_decoded, wire) = match &delivered {
            None => (Verdict::Lost, None, None),
            Some(pkt) => {
                let wire = Packet::from_bytes(&pkt.to_bytes())?;
                match self.receiver.receive(&wire) {
                    Ok(values) => (
                        Verdict::Accepted,
                        Some(Vector3::from_column_slice(&values)),
                        Some(wire),
                    ),
                    Err(Error::CorruptPacket { .. }) => (Verdict::Corrupt, None, Some(wire)),
                    Err(Error::StalePacket { .. }) => (Verdict::Stale, None, Some(wire)),
                    Err(e) => return Err(e),
                }
            }
        };
        if let Some(w) = &wire {
            self.capture.push(CaptureEntry {
                step: self.step,
                direction: "delivered",
                seq: w.seq,
                payload_hex: w.payload_hex(),
                verdict: verdict.as_str(),
                adversary_action: action,
            });
        } else {
            self.capture.push(CaptureEntry {
                step: self.step,
                direction: "delivered",
                seq: sent.seq,
                payload_hex: String::new(),
                verdict: verdict.as_str(),
                adversary_action: action,
            });
        }

        // Monitor.
        let predicted = if self.step == 0 {
            self.estimate.clone()
        } else {
            self.ekf.predict(&self.estimate, &self.command)?
        };
        let (residual, gate) = match &y_decoded {
            Some(yd) => {
                let c = self.ekf.correct(&predicted, yd)?;
                self.estimate = c.state;
                (Some(arr(&c.residual)), Some(c.gate))
            }
            None => {
                self.estimate = predicted;
                (None, None)
            }
        };
        let decision = match (phase, residual) {
            (RunPhase::Calibration, Some(r)) => {
                self.calibration_residuals.push(r);
                None
            }
            (RunPhase::Operation, Some(r)) => {
                let t = self
                    .thresholds
                    .as_ref()
                    .expect("thresholds are set before operation");
                Some(decide(&r, t))
            }
            (_, None) => None,
        };

        // Controller → actuators; the adversary eavesdrops the command.
        if let Some(yd) = &y_decoded {
            self.command = level_controller(yd, &self.cfg.setpoints(), &self.controller);
        }
        self.adversary.observe_command(&self.command);

        self.records.push(StepRecord {
            step: self.step,
            phase,
            x_true: arr(&self.x),
            y_plain: arr(&y),
            payload_sent: sent.payload.clone(),
            payload_delivered: wire.map(|w| w.payload),
            y_decoded: y_decoded.as_ref().map(arr),
            xhat: arr(&self.estimate.xhat),
            residual,
            gate_statistic: gate.map(|g| g.statistic),
            gate_accepted: gate.map(|g| g.accepted),
            decision,
            verdict,
            adversary_action: action,
            command: self.command,
        });

        self.step += 1;
        if self.step as usize == self.cfg.calibration_len && !self.preset_thresholds {
            self.thresholds = Some(calibrate(&self.calibration_residuals, self.cfg.margin)?);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RunLog> {
        let thresholds = self
            .thresholds
            .clone()
            .ok_or_else(|| Error::Calibration("run ended before calibration".to_string()))?;
        let summary = summarize(&self.records, self.adversary.onset_seq().map(u64::from));
        Ok(RunLog {
            records: self.records,
            thresholds,
            capture: self.capture,
            summary,
        })
    }
}

fn summarize(records: &[StepRecord], onset: Option<u64>) -> Summary {
    let decided: Vec<(u64, &Decision)> = records
        .iter()
        .filter_map(|r| r.decision.as_ref().map(|d| (r.step, d)))
        .collect();
    let report = alarm_stream(decided.iter().copied(), onset);
    let attacked = |step: u64| onset.is_some_and(|t0| step >= t0);

    let healthy_decisions = decided.iter().filter(|(s, _)| !attacked(*s)).count() as u64;
    let false_alarms = report.events.iter().filter(|e| !attacked(e.step)).count() as u64;
    let post_onset_alarms = report.events.len() as u64 - false_alarms;

    let full_violation_delay = onset.and_then(|t0| {
        let mut seen = std::collections::BTreeSet::new();
        report
            .events
            .iter()
            .filter(|e| e.step >= t0)
            .find_map(|e| {
                seen.extend(e.violated.iter().copied());
                (seen.len() == 3).then_some(e.step - t0)
            })
    });

    let count = |v: Verdict| records.iter().filter(|r| r.verdict == v).count() as u64;
    let (lost, corrupt, stale) = (count(Verdict::Lost), count(Verdict::Corrupt), count(Verdict::Stale));
    Summary {
        steps: records.len() as u64,
        alarms: report.events.len() as u64,
        post_onset_alarms,
        onset,
        detection_delay: report.detection_delay,
        full_violation_delay,
        false_alarms,
        false_alarm_rate: if healthy_decisions == 0 {
            0.0
        } else {
            false_alarms as f64 / healthy_decisions as f64
        },
        dropped_packets: lost + corrupt + stale,
        lost,
        corrupt,
        stale,
        gate_rejections: records
            .iter()
            .filter(|r| r.gate_accepted == Some(false))
            .count() as u64,
    }
}

/// Runs the full scenario: calibration on `[0, T)`, then operation with the
/// configured attack armed, up to `horizon` steps.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog> {
    run_with(Simulation::new(cfg.clone())?, cfg.horizon)
}

/// Like [`run_scenario`] but with thresholds calibrated elsewhere.
pub fn run_scenario_with_thresholds(cfg: &ScenarioConfig, thresholds: ThresholdVector) -> Result<RunLog> {
    run_with(
        Simulation::new(cfg.clone())?.with_thresholds(thresholds),
        cfg.horizon,
    )
}

/// Runs the healthy phase only and returns the resulting thresholds.
pub fn run_calibration(cfg: &ScenarioConfig) -> Result<ThresholdVector> {
    let mut sim = Simulation::new(cfg.clone())?;
    for _ in 0..cfg.calibration_len {
        sim.advance()?;
    }
    sim.thresholds()
        .cloned()
        .ok_or_else(|| Error::Calibration("no thresholds after calibration".to_string()))
}

fn run_with(mut sim: Simulation, horizon: usize) -> Result<RunLog> {
    for _ in 0..horizon {
        sim.advance()?;
    }
    sim.finish()
}
