//! Sequenced frames between the sensor concentrator and the monitor.
//!
//! Wire layout, little-endian throughout:
//!
//! ```text
//! "HYD1" | seq: u32 | count: u16 | count x f64 payload | crc32: u32
//! ```
//!
//! The CRC is the IEEE 802.3 CRC-32 (reflected polynomial `0xEDB88320`) over every
//! byte before it.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keystream::{select_index, PSequenceKey};
use crate::signed_permutation::{codebook_size, CodebookIndex, SignedPermutation};

pub const MAGIC: [u8; 4] = *b"HYD1";
const HEADER_LEN: usize = 4 + 4 + 2;
const CRC_LEN: usize = 4;

/// Modulus used to reduce the keystream into a codebook index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionModulus {
    /// The full codebook size `2^n n!`.
    #[default]
    Codebook,
    /// The output dimension `n`, which only reaches the first `n` codebook entries.
    Ny,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub coding_enabled: bool,
    #[serde(skip)]
    pub key: PSequenceKey,
    pub loss_probability: f64,
    pub rng_seed: u64,
    pub selection_modulus: SelectionModulus,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            coding_enabled: true,
            key: PSequenceKey::default(),
            loss_probability: 0.0,
            rng_seed: 0,
            selection_modulus: SelectionModulus::Codebook,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(Error::Config(format!(
                "channel.loss_probability {} outside [0, 1)",
                self.loss_probability
            )));
        }
        Ok(())
    }

    /// Coding matrix for packet `seq` with `n` measurements.
    pub fn coding_matrix(&self, seq: u32, n: usize) -> Result<SignedPermutation> {
        let modulus = match self.selection_modulus {
            SelectionModulus::Codebook => codebook_size(n)?,
            SelectionModulus::Ny => n as u64,
        };
        let index = select_index(&self.key, u64::from(seq), modulus)?;
        SignedPermutation::unrank(index, n)
    }

    pub fn coding_index(&self, seq: u32, n: usize) -> Result<CodebookIndex> {
        Ok(self.coding_matrix(seq, n)?.rank())
    }
}

/// One frame. `crc` is whatever was on the wire; [`Packet::new`] computes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub seq: u32,
    pub payload: Vec<f64>,
    pub crc: u32,
}

impl Packet {
    pub fn new(seq: u32, payload: Vec<f64>) -> Self {
        let mut pkt = Packet {
            seq,
            payload,
            crc: 0,
        };
        pkt.crc = pkt.compute_crc();
        pkt
    }

    pub fn count(&self) -> u16 {
        self.payload.len() as u16
    }

    fn body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len() + CRC_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.count().to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn compute_crc(&self) -> u32 {
        crc32fast::hash(&self.body())
    }

    pub fn crc_valid(&self) -> bool {
        self.crc == self.compute_crc()
    }

    /// Recomputes the checksum after the payload has been modified.
    pub fn reseal(&mut self) {
        self.crc = self.compute_crc();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body();
        out.extend_from_slice(&self.crc.to_le_bytes());
        out
    }

    /// Parses a frame without checking the CRC; see [`Packet::crc_valid`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(Error::MalformedFrame(format!("{} bytes is too short", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::MalformedFrame("bad magic".to_string()));
        }
        let seq = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        let count = u16::from_le_bytes(bytes[8..10].try_into().expect("2 bytes")) as usize;
        let expected = HEADER_LEN + 8 * count + CRC_LEN;
        if bytes.len() != expected {
            return Err(Error::MalformedFrame(format!(
                "count {count} needs {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let payload = bytes[HEADER_LEN..HEADER_LEN + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let crc = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
        Ok(Packet { seq, payload, crc })
    }

    pub fn payload_hex(&self) -> String {
        let mut s = String::with_capacity(16 * self.payload.len());
        for v in &self.payload {
            let _ = write!(s, "{}", hex::encode(v.to_le_bytes()));
        }
        s
    }
}

/// Builds the frame for measurement vector `y` at sequence number `seq`.
pub fn encode(y: &[f64], seq: u32, cfg: &ChannelConfig) -> Result<Packet> {
    if y.is_empty() || y.len() > u16::MAX as usize {
        return Err(Error::DimensionMismatch {
            expected: 3,
            actual: y.len(),
        });
    }
    let payload = if cfg.coding_enabled {
        cfg.coding_matrix(seq, y.len())?.apply(y)?
    } else {
        y.to_vec()
    };
    Ok(Packet::new(seq, payload))
}

/// Undoes the coding of a CRC-valid frame. Sequence freshness is checked by [`Receiver`].
pub fn decode(pkt: &Packet, cfg: &ChannelConfig) -> Result<Vec<f64>> {
    if !pkt.crc_valid() {
        return Err(Error::CorruptPacket {
            seq: pkt.seq,
            received: pkt.crc,
            computed: pkt.compute_crc(),
        });
    }
    if cfg.coding_enabled {
        cfg.coding_matrix(pkt.seq, pkt.payload.len())?
            .inverse()
            .apply(&pkt.payload)
    } else {
        Ok(pkt.payload.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReceiverStats {
    pub accepted: u64,
    pub corrupt: u64,
    pub stale: u64,
}

/// Monitor-side endpoint: decodes and enforces strictly increasing sequence numbers.
#[derive(Debug, Clone)]
pub struct Receiver {
    cfg: ChannelConfig,
    last_seq: Option<u32>,
    stats: ReceiverStats,
}

impl Receiver {
    pub fn new(cfg: ChannelConfig) -> Self {
        Receiver {
            cfg,
            last_seq: None,
            stats: ReceiverStats::default(),
        }
    }

    pub fn stats(&self) -> ReceiverStats {
        self.stats
    }

    pub fn last_seq(&self) -> Option<u32> {
        self.last_seq
    }

    pub fn receive(&mut self, pkt: &Packet) -> Result<Vec<f64>> {
        if let Some(last) = self.last_seq {
            if pkt.seq <= last {
                self.stats.stale += 1;
                return Err(Error::StalePacket { seq: pkt.seq, last });
            }
        }
        match decode(pkt, &self.cfg) {
            Ok(y) => {
                self.last_seq = Some(pkt.seq);
                self.stats.accepted += 1;
                Ok(y)
            }
            Err(e) => {
                if matches!(e, Error::CorruptPacket { .. }) {
                    self.stats.corrupt += 1;
                }
                Err(e)
            }
        }
    }
}

/// A man-in-the-middle hook on the link. It may observe, drop (`None`) or substitute.
pub trait Interceptor {
    fn intercept(&mut self, pkt: Packet) -> Option<Packet>;
}

/// Lossy link with a seeded drop process.
#[derive(Debug, Clone)]
pub struct Link {
    loss_probability: f64,
    rng: ChaCha8Rng,
}

impl Link {
    pub fn new(cfg: &ChannelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(2);
        Link {
            loss_probability: cfg.loss_probability,
            rng,
        }
    }

    /// Drops with the configured probability; otherwise hands the packet to the tap.
    pub fn transmit(&mut self, pkt: Packet, tap: Option<&mut dyn Interceptor>) -> Option<Packet> {
        // One draw per packet keeps the loss pattern independent of the tap.
        let lost = self.rng.random::<f64>() < self.loss_probability;
        if lost {
            return None;
        }
        match tap {
            Some(t) => t.intercept(pkt),
            None => Some(pkt),
        }
    }
}
