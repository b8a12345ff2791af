//! Uniform angle quantizers and the packed feedback frame.
//!
//! Indices are written LSB-first into a little-endian bit stream, tone by
//! tone, in [`angle_order`](super::angle_order).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{angle_count, AngleKind, AngleSet, CodecError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackKind {
    Type0,
    Type1,
}

impl FeedbackKind {
    /// `(b_phi, b_psi)`.
    pub fn bits(self) -> (u32, u32) {
        match self {
            FeedbackKind::Type0 => (7, 5),
            FeedbackKind::Type1 => (9, 7),
        }
    }

    fn code(self) -> u8 {
        match self {
            FeedbackKind::Type0 => 0,
            FeedbackKind::Type1 => 1,
        }
    }
}

pub fn phi_index(phi: f64, bits: u32) -> u32 {
    let levels = 1i64 << bits;
    let x = (phi - PI / (1u64 << bits) as f64) * (1u64 << (bits - 1)) as f64 / PI;
    ((x + 0.5).floor() as i64).rem_euclid(levels) as u32
}

pub fn phi_level(index: u32, bits: u32) -> f64 {
    index as f64 * PI / (1u64 << (bits - 1)) as f64 + PI / (1u64 << bits) as f64
}

pub fn psi_index(psi: f64, bits: u32) -> u32 {
    let x = (psi - PI / (1u64 << (bits + 2)) as f64) * (1u64 << (bits + 1)) as f64 / PI;
    ((x + 0.5).floor()).clamp(0.0, ((1u64 << bits) - 1) as f64) as u32
}

pub fn psi_level(index: u32, bits: u32) -> f64 {
    index as f64 * PI / (1u64 << (bits + 1)) as f64 + PI / (1u64 << (bits + 2)) as f64
}

/// Quantized angles of every tone, packed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackFrame {
    pub kind: FeedbackKind,
    pub b_phi: u32,
    pub b_psi: u32,
    pub n_tx: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub payload: Vec<u8>,
}

impl FeedbackFrame {
    pub fn bits_per_subcarrier(&self) -> usize {
        let c = angle_count(self.n_tx, self.n_streams).expect("frame geometry was validated");
        c.n_phi * self.b_phi as usize + c.n_psi * self.b_psi as usize
    }

    pub fn payload_bits(&self) -> usize {
        self.n_subcarriers * self.bits_per_subcarrier()
    }

    /// Wire form: kind byte, `u16` LE tone count, payload. The antenna
    /// geometry is negotiated out of band and supplied to
    /// [`from_bytes`](Self::from_bytes).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 + self.payload.len());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.n_subcarriers as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], n_tx: usize, n_streams: usize) -> Result<Self, CodecError> {
        if bytes.len() < 3 {
            return Err(CodecError::Framing(format!("{} bytes is shorter than the frame header", bytes.len())));
        }
        let kind = match bytes[0] {
            0 => FeedbackKind::Type0,
            1 => FeedbackKind::Type1,
            k => return Err(CodecError::Framing(format!("unknown feedback kind {k}"))),
        };
        let (b_phi, b_psi) = kind.bits();
        let n_subcarriers = u16::from_le_bytes([bytes[1], bytes[2]]) as usize;
        let frame = FeedbackFrame { kind, b_phi, b_psi, n_tx, n_streams, n_subcarriers, payload: bytes[3..].to_vec() };
        angle_count(n_tx, n_streams)?;
        frame.check_length()?;
        Ok(frame)
    }

    fn check_length(&self) -> Result<(), CodecError> {
        let expected = self.payload_bits().div_ceil(8);
        if self.payload.len() != expected {
            return Err(CodecError::Framing(format!(
                "payload is {} bytes, {} tones need {expected}",
                self.payload.len(),
                self.n_subcarriers
            )));
        }
        Ok(())
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    pos: usize,
}

impl BitWriter {
    fn push(&mut self, value: u32, bits: u32) {
        for b in 0..bits {
            if self.pos % 8 == 0 {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (self.pos % 8);
            }
            self.pos += 1;
        }
    }
}

fn read_bits(bytes: &[u8], pos: &mut usize, bits: u32) -> u32 {
    let mut v = 0;
    for b in 0..bits {
        if (bytes[*pos / 8] >> (*pos % 8)) & 1 == 1 {
            v |= 1 << b;
        }
        *pos += 1;
    }
    v
}

pub fn quantize_angles(angles: &AngleSet, kind: FeedbackKind) -> Result<FeedbackFrame, CodecError> {
    let count = angle_count(angles.n_tx, angles.n_streams)?;
    let (b_phi, b_psi) = kind.bits();
    let n_sub = angles.n_subcarriers();
    if angles.phi.len() != n_sub * count.n_phi || angles.psi.len() != n_sub * count.n_psi {
        return Err(CodecError::Framing("angle set does not fill whole tones".into()));
    }
    let mut w = BitWriter { bytes: Vec::new(), pos: 0 };
    for k in 0..n_sub {
        for (id, value) in angles.tone(k) {
            match id.kind {
                AngleKind::Phi => w.push(phi_index(value, b_phi), b_phi),
                AngleKind::Psi => w.push(psi_index(value, b_psi), b_psi),
            }
        }
    }
    Ok(FeedbackFrame {
        kind,
        b_phi,
        b_psi,
        n_tx: angles.n_tx,
        n_streams: angles.n_streams,
        n_subcarriers: n_sub,
        payload: w.bytes,
    })
}

pub fn dequantize_angles(frame: &FeedbackFrame) -> Result<AngleSet, CodecError> {
    angle_count(frame.n_tx, frame.n_streams)?;
    frame.check_length()?;
    let order = super::angle_order(frame.n_tx, frame.n_streams);
    let mut out = AngleSet::empty(frame.n_tx, frame.n_streams);
    let mut pos = 0;
    for _ in 0..frame.n_subcarriers {
        for id in &order {
            match id.kind {
                AngleKind::Phi => out.phi.push(phi_level(read_bits(&frame.payload, &mut pos, frame.b_phi), frame.b_phi)),
                AngleKind::Psi => out.psi.push(psi_level(read_bits(&frame.payload, &mut pos, frame.b_psi), frame.b_psi)),
            }
        }
    }
    Ok(out)
}
