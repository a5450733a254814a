//! Man-in-the-middle on the sensor link.
//!
//! The adversary eavesdrops the actuator commands to spot steady state, keeps the
//! most recent sensor frames, and once the plant has settled replaces live frames
//! with recorded ones. It never holds key material, so in `replay_payload` mode it
//! can only copy coded payloads as they were captured.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{Interceptor, Packet};
use crate::error::{Error, Result};
use crate::plant::ActuatorInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    None,
    /// Live sequence numbers, recorded payloads, CRC recomputed.
    #[default]
    ReplayPayload,
    /// Recorded frames resent verbatim, old sequence numbers included.
    ReplayPacket,
    /// Live frames with a constant offset added to the payload.
    BiasInjection,
}

impl std::str::FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackMode::None),
            "replay_payload" => Ok(AttackMode::ReplayPayload),
            "replay_packet" => Ok(AttackMode::ReplayPacket),
            "bias_injection" => Ok(AttackMode::BiasInjection),
            other => Err(Error::Config(format!("unknown attack mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// Number of consecutive commands that must agree to call the plant steady.
    pub steady_window: usize,
    /// Largest per-component command spread inside the window.
    pub steady_epsilon: f64,
    pub bias: Option<[f64; 3]>,
    /// Frames kept and cycled during replay. One frame reproduces a single frozen snapshot.
    pub record_len: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            mode: AttackMode::ReplayPayload,
            steady_window: 50,
            steady_epsilon: 1e-3,
            bias: None,
            record_len: 1,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steady_window == 0 {
            return Err(Error::Config("attack.steady_window must be >= 1".to_string()));
        }
        if !(self.steady_epsilon >= 0.0) {
            return Err(Error::Config("attack.steady_epsilon must be >= 0".to_string()));
        }
        if self.record_len == 0 {
            return Err(Error::Config("attack.record_len must be >= 1".to_string()));
        }
        if self.mode == AttackMode::BiasInjection && self.bias.is_none() {
            return Err(Error::Config(
                "attack.bias is required for bias_injection".to_string(),
            ));
        }
        Ok(())
    }
}

/// Frames captured at attack onset.
#[derive(Debug, Clone, PartialEq)]
pub struct RecorderBuffer {
    pub recorded: Vec<Packet>,
    /// Sequence number of the first substituted frame.
    pub onset_seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryAction {
    /// No attack configured.
    Inactive,
    /// Frame forwarded unchanged while eavesdropping.
    Observe,
    ReplayPayload,
    ReplayPacket,
    InjectBias,
}

impl AdversaryAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryAction::Inactive => "none",
            AdversaryAction::Observe => "observe",
            AdversaryAction::ReplayPayload => "replay_payload",
            AdversaryAction::ReplayPacket => "replay_packet",
            AdversaryAction::InjectBias => "bias_injection",
        }
    }

    pub fn is_attack(self) -> bool {
        !matches!(self, AdversaryAction::Inactive | AdversaryAction::Observe)
    }
}

impl fmt::Display for AdversaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AdversaryAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AdversaryAction::Inactive,
            AdversaryAction::Observe,
            AdversaryAction::ReplayPayload,
            AdversaryAction::ReplayPacket,
            AdversaryAction::InjectBias,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown adversary action {s:?}")))
    }
}

fn window_is_steady<'a, I>(window: I, epsilon: f64) -> bool
where
    I: IntoIterator<Item = &'a ActuatorInput>,
{
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for u in window {
        for (i, v) in u.as_array().into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    (0..3).all(|i| hi[i] - lo[i] <= epsilon)
}

/// First `t ≥ W` such that commands `t-W .. t` vary by at most `epsilon` per
/// component, i.e. the number of commands seen when steady state is recognised.
pub fn detect_steady_state(stream: &[ActuatorInput], cfg: &AttackConfig) -> Option<usize> {
    let w = cfg.steady_window;
    if w == 0 || stream.len() < w {
        return None;
    }
    (w..=stream.len()).find(|&t| window_is_steady(&stream[t - w..t], cfg.steady_epsilon))
}

/// Substitutes an intercepted frame once the attack is active. Depends only on the
/// recorded frames, the live sequence number and the config.
pub fn replay_intercept(pkt: &Packet, buffer: &RecorderBuffer, cfg: &AttackConfig) -> Packet {
    let slot = |len: usize| (pkt.seq.wrapping_sub(buffer.onset_seq) as usize) % len;
    match cfg.mode {
        AttackMode::None => pkt.clone(),
        AttackMode::ReplayPayload => {
            let src = &buffer.recorded[slot(buffer.recorded.len())];
            Packet::new(pkt.seq, src.payload.clone())
        }
        AttackMode::ReplayPacket => buffer.recorded[slot(buffer.recorded.len())].clone(),
        AttackMode::BiasInjection => {
            let bias = cfg.bias.unwrap_or([0.0; 3]);
            let payload = pkt
                .payload
                .iter()
                .enumerate()
                .map(|(i, v)| v + bias.get(i).copied().unwrap_or(0.0))
                .collect();
            Packet::new(pkt.seq, payload)
        }
    }
}

/// Stateful interceptor driven by the simulation loop.
#[derive(Debug, Clone)]
pub struct Adversary {
    cfg: AttackConfig,
    armed: bool,
    commands: VecDeque<ActuatorInput>,
    frames: VecDeque<Packet>,
    recorder: Option<RecorderBuffer>,
    last_action: AdversaryAction,
}

impl Adversary {
    pub fn new(cfg: AttackConfig) -> Self {
        Adversary {
            cfg,
            armed: false,
            commands: VecDeque::new(),
            frames: VecDeque::new(),
            recorder: None,
            last_action: AdversaryAction::Inactive,
        }
    }

    pub fn config(&self) -> &AttackConfig {
        &self.cfg
    }

    /// Allows the attack to start at the next steady-state detection.
    pub fn arm(&mut self) {
        self.armed = true;
    }

    /// Eavesdrops one controller → actuator command.
    pub fn observe_command(&mut self, u: &ActuatorInput) {
        self.commands.push_back(*u);
        while self.commands.len() > self.cfg.steady_window {
            self.commands.pop_front();
        }
    }

    pub fn recorder(&self) -> Option<&RecorderBuffer> {
        self.recorder.as_ref()
    }

    pub fn onset_seq(&self) -> Option<u32> {
        self.recorder.as_ref().map(|r| r.onset_seq)
    }

    pub fn last_action(&self) -> AdversaryAction {
        self.last_action
    }

    fn steady(&self) -> bool {
        self.commands.len() >= self.cfg.steady_window
            && window_is_steady(&self.commands, self.cfg.steady_epsilon)
    }
}

impl Interceptor for Adversary {
    fn intercept(&mut self, pkt: Packet) -> Option<Packet> {
        if self.cfg.mode == AttackMode::None {
            self.last_action = AdversaryAction::Inactive;
            return Some(pkt);
        }
        if self.recorder.is_none() && self.armed && self.steady() && !self.frames.is_empty() {
            self.recorder = Some(RecorderBuffer {
                recorded: self.frames.iter().cloned().collect(),
                onset_seq: pkt.seq,
            });
        }
        match &self.recorder {
            Some(buffer) => {
                self.last_action = match self.cfg.mode {
                    AttackMode::ReplayPayload => AdversaryAction::ReplayPayload,
                    AttackMode::ReplayPacket => AdversaryAction::ReplayPacket,
                    AttackMode::BiasInjection => AdversaryAction::InjectBias,
                    AttackMode::None => AdversaryAction::Inactive,
                };
                Some(replay_intercept(&pkt, buffer, &self.cfg))
            }
            None => {
                self.last_action = AdversaryAction::Observe;
                self.frames.push_back(pkt.clone());
                while self.frames.len() > self.cfg.record_len {
                    self.frames.pop_front();
                }
                Some(pkt)
            }
        }
    }
}
