//! Binary wire formats for frames, diffs and static positions.
//!
//! All integers are little-endian. A frame or diff payload is
//!
//! ```text
//! offset  size  field
//!  0      4     magic "PLSF"
//!  4      1     version (1)
//!  5      1     kind: 1 = frame, 2 = diff
//!  6      1     flags: bit 0 base connectivity missing, bit 1 other connectivity missing
//!  7      1     column count C
//!  8      4     neuron count N
//! 12      2     area count A
//! 14      2     reserved (0)
//! 16      1     base scenario code
//! 17      1     other scenario code (0xFF for frames)
//! 18      2     reserved (0)
//! 20      4     base timestep
//! 24      4     other timestep (0 for frames)
//! 28      4     triplet count M
//! 32      4     triplet offset
//! 36      4     total payload length
//! 40      12*C  column descriptors: property u8, dtype u8, reserved u16, offset u32, byte length u32
//! ...           column arrays, each starting on a 4-byte boundary
//! ...           M triplets: src_area u16, dst_area u16, value (u32 for frames, i32 for diffs)
//! ```
//!
//! Integer columns are narrowed to the smallest type holding every value and
//! the frame `fired` column is bit-packed (LSB first), so decoders must read
//! the dtype from each descriptor. Zero connectivity entries are omitted.
//!
//! The positions block is a 16-byte header (`"PLSP"`, version u8, 3 reserved
//! bytes, N u32, A u16, record size u16 = 24) followed by N records of
//! `id u32, x f32, y f32, z f32, cluster_id u32, cluster_slot u8, reserved u8, area_id u16`.

use crate::error::{Error, Result};
use crate::model::{
    AreaConnectivity, ConnectivityStatus, DiffColumns, DiffFrame, FrameColumns, FrameKey,
    NeuronProperty, NeuronStatic, Scenario, TimestepFrame,
};

pub const FRAME_MAGIC: [u8; 4] = *b"PLSF";
pub const POSITIONS_MAGIC: [u8; 4] = *b"PLSP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 40;
pub const DESCRIPTOR_LEN: usize = 12;
pub const POSITIONS_HEADER_LEN: usize = 16;
pub const POSITION_RECORD_LEN: usize = 24;

const NO_SCENARIO: u8 = 0xFF;
const FLAG_BASE_MISSING: u8 = 1;
const FLAG_OTHER_MISSING: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Frame = 1,
    Diff = 2,
}

/// Element type of one encoded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    Bit = 0,
    U8 = 1,
    U16 = 2,
    U32 = 3,
    I8 = 4,
    I16 = 5,
    I32 = 6,
    F32 = 7,
}

impl DType {
    fn from_code(code: u8) -> Result<DType> {
        Ok(match code {
            0 => DType::Bit,
            1 => DType::U8,
            2 => DType::U16,
            3 => DType::U32,
            4 => DType::I8,
            5 => DType::I16,
            6 => DType::I32,
            7 => DType::F32,
            other => return Err(Error::Payload(format!("unknown dtype {other}"))),
        })
    }

    fn byte_len(self, n: usize) -> usize {
        match self {
            DType::Bit => n.div_ceil(8),
            DType::U8 | DType::I8 => n,
            DType::U16 | DType::I16 => 2 * n,
            DType::U32 | DType::I32 | DType::F32 => 4 * n,
        }
    }
}

enum Encoded {
    Bits(Vec<bool>),
    Unsigned(Vec<u32>),
    Signed(Vec<i64>),
    Float(Vec<f32>),
}

impl Encoded {
    fn dtype(&self) -> Result<DType> {
        Ok(match self {
            Encoded::Bits(_) => DType::Bit,
            Encoded::Float(_) => DType::F32,
            Encoded::Unsigned(v) => match v.iter().copied().max().unwrap_or(0) {
                0..=0xFF => DType::U8,
                0x100..=0xFFFF => DType::U16,
                _ => DType::U32,
            },
            Encoded::Signed(v) => {
                let lo = v.iter().copied().min().unwrap_or(0);
                let hi = v.iter().copied().max().unwrap_or(0);
                if lo >= i8::MIN as i64 && hi <= i8::MAX as i64 {
                    DType::I8
                } else if lo >= i16::MIN as i64 && hi <= i16::MAX as i64 {
                    DType::I16
                } else if lo >= i32::MIN as i64 && hi <= i32::MAX as i64 {
                    DType::I32
                } else {
                    return Err(Error::Payload(format!(
                        "delta range [{lo}, {hi}] does not fit in 32 bits"
                    )));
                }
            }
        })
    }

    fn write(&self, dtype: DType, out: &mut Vec<u8>) {
        match self {
            Encoded::Bits(v) => {
                let start = out.len();
                out.resize(start + v.len().div_ceil(8), 0);
                for (i, b) in v.iter().enumerate() {
                    if *b {
                        out[start + i / 8] |= 1 << (i % 8);
                    }
                }
            }
            Encoded::Float(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Encoded::Unsigned(v) => match dtype {
                DType::U8 => out.extend(v.iter().map(|x| *x as u8)),
                DType::U16 => v.iter().for_each(|x| out.extend_from_slice(&(*x as u16).to_le_bytes())),
                _ => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            },
            Encoded::Signed(v) => match dtype {
                DType::I8 => out.extend(v.iter().map(|x| *x as i8 as u8)),
                DType::I16 => v.iter().for_each(|x| out.extend_from_slice(&(*x as i16).to_le_bytes())),
                _ => v.iter().for_each(|x| out.extend_from_slice(&(*x as i32).to_le_bytes())),
            },
        }
    }
}

struct Header {
    kind: PayloadKind,
    flags: u8,
    neuron_count: usize,
    area_count: usize,
    base: FrameKey,
    other: Option<FrameKey>,
}

fn pad4(out: &mut Vec<u8>) {
    while out.len() % 4 != 0 {
        out.push(0);
    }
}

fn encode(header: Header, columns: Vec<(NeuronProperty, Encoded)>, triplets: Vec<(u16, u16, i64)>) -> Result<Vec<u8>> {
    let dtypes: Vec<DType> = columns.iter().map(|(_, c)| c.dtype()).collect::<Result<_>>()?;
    let n = header.neuron_count;

    let mut offsets = Vec::with_capacity(columns.len());
    let mut cursor = HEADER_LEN + DESCRIPTOR_LEN * columns.len();
    for dt in &dtypes {
        cursor = cursor.next_multiple_of(4);
        offsets.push(cursor);
        cursor += dt.byte_len(n);
    }
    let triplet_offset = cursor.next_multiple_of(4);
    let total = triplet_offset + 8 * triplets.len();
    if total > u32::MAX as usize {
        return Err(Error::Payload("payload exceeds 4 GiB".into()));
    }

    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(VERSION);
    out.push(header.kind as u8);
    out.push(header.flags);
    out.push(columns.len() as u8);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(header.area_count as u16).to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    out.push(header.base.scenario.code());
    out.push(header.other.map_or(NO_SCENARIO, |k| k.scenario.code()));
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&header.base.timestep.to_le_bytes());
    out.extend_from_slice(&header.other.map_or(0, |k| k.timestep).to_le_bytes());
    out.extend_from_slice(&(triplets.len() as u32).to_le_bytes());
    out.extend_from_slice(&(triplet_offset as u32).to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);

    for ((property, _), (dt, offset)) in columns.iter().zip(dtypes.iter().zip(&offsets)) {
        out.push(property.code());
        out.push(*dt as u8);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(*offset as u32).to_le_bytes());
        out.extend_from_slice(&(dt.byte_len(n) as u32).to_le_bytes());
    }
    for ((_, col), dt) in columns.iter().zip(&dtypes) {
        pad4(&mut out);
        col.write(*dt, &mut out);
    }
    pad4(&mut out);
    for (s, t, v) in triplets {
        out.extend_from_slice(&s.to_le_bytes());
        out.extend_from_slice(&t.to_le_bytes());
        match header.kind {
            PayloadKind::Frame => out.extend_from_slice(&(v as u32).to_le_bytes()),
            PayloadKind::Diff => out.extend_from_slice(&(v as i32).to_le_bytes()),
        }
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

/// Encodes a stored frame for transfer.
pub fn encode_frame(frame: &TimestepFrame) -> Result<Vec<u8>> {
    let c = &frame.columns;
    let columns = vec![
        (NeuronProperty::Calcium, Encoded::Float(c.calcium.clone())),
        (NeuronProperty::CalciumTargetDelta, Encoded::Float(c.calcium_target_delta.clone())),
        (NeuronProperty::Fired, Encoded::Bits(c.fired.clone())),
        (NeuronProperty::FiredFraction, Encoded::Float(c.fired_fraction.clone())),
        (NeuronProperty::GrownAxons, Encoded::Float(c.grown_axons.clone())),
        (NeuronProperty::GrownDendrites, Encoded::Float(c.grown_dendrites.clone())),
        (NeuronProperty::SynapsesOut, Encoded::Unsigned(c.synapses_out.clone())),
        (NeuronProperty::SynapsesIn, Encoded::Unsigned(c.synapses_in.clone())),
    ];
    let flags = match frame.connectivity_status {
        ConnectivityStatus::Missing => FLAG_BASE_MISSING,
        ConnectivityStatus::Present => 0,
    };
    let header = Header {
        kind: PayloadKind::Frame,
        flags,
        neuron_count: frame.neuron_count(),
        area_count: frame.area_count(),
        base: frame.key(),
        other: None,
    };
    let triplets = frame.connectivity.nonzero().map(|(s, t, v)| (s, t, v as i64)).collect();
    encode(header, columns, triplets)
}

/// Encodes a diff; `*_missing` carry the connectivity status of both inputs.
pub fn encode_diff(diff: &DiffFrame, base_missing: bool, other_missing: bool) -> Result<Vec<u8>> {
    let d = &diff.column_deltas;
    let columns = vec![
        (NeuronProperty::Calcium, Encoded::Float(d.calcium.clone())),
        (NeuronProperty::CalciumTargetDelta, Encoded::Float(d.calcium_target_delta.clone())),
        (NeuronProperty::Fired, Encoded::Signed(d.fired.iter().map(|x| *x as i64).collect())),
        (NeuronProperty::FiredFraction, Encoded::Float(d.fired_fraction.clone())),
        (NeuronProperty::GrownAxons, Encoded::Float(d.grown_axons.clone())),
        (NeuronProperty::GrownDendrites, Encoded::Float(d.grown_dendrites.clone())),
        (NeuronProperty::SynapsesOut, Encoded::Signed(d.synapses_out.clone())),
        (NeuronProperty::SynapsesIn, Encoded::Signed(d.synapses_in.clone())),
    ];
    let triplets: Vec<(u16, u16, i64)> = diff.nonzero_connectivity().collect();
    if let Some((s, t, v)) = triplets.iter().find(|(_, _, v)| i32::try_from(*v).is_err()) {
        return Err(Error::Payload(format!("connectivity delta {v} at ({s}, {t}) exceeds i32")));
    }
    let flags = (base_missing as u8 * FLAG_BASE_MISSING) | (other_missing as u8 * FLAG_OTHER_MISSING);
    let header = Header {
        kind: PayloadKind::Diff,
        flags,
        neuron_count: diff.column_deltas.len(),
        area_count: diff.area_count(),
        base: diff.base,
        other: Some(diff.other),
    };
    encode(header, columns, triplets)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, offset: usize, len: usize) -> Result<&'a [u8]> {
        offset
            .checked_add(len)
            .and_then(|end| self.bytes.get(offset..end))
            .ok_or_else(|| Error::Payload(format!("{len} bytes at {offset} past end of {}", self.bytes.len())))
    }

    fn u8(&self, at: usize) -> Result<u8> {
        Ok(self.slice(at, 1)?[0])
    }

    fn u16(&self, at: usize) -> Result<u16> {
        Ok(u16::from_le_bytes(self.slice(at, 2)?.try_into().unwrap()))
    }

    fn u32(&self, at: usize) -> Result<u32> {
        Ok(u32::from_le_bytes(self.slice(at, 4)?.try_into().unwrap()))
    }
}

/// A decoded column, widened to a uniform representation.
enum Decoded {
    Bits(Vec<bool>),
    Ints(Vec<i64>),
    Floats(Vec<f32>),
}

fn decode_column(bytes: &[u8], dtype: DType, n: usize) -> Decoded {
    let chunks = |w: usize| bytes.chunks_exact(w);
    match dtype {
        DType::Bit => Decoded::Bits((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()),
        DType::U8 => Decoded::Ints(bytes.iter().map(|b| *b as i64).collect()),
        DType::I8 => Decoded::Ints(bytes.iter().map(|b| *b as i8 as i64).collect()),
        DType::U16 => Decoded::Ints(chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as i64).collect()),
        DType::I16 => Decoded::Ints(chunks(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as i64).collect()),
        DType::U32 => Decoded::Ints(chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as i64).collect()),
        DType::I32 => Decoded::Ints(chunks(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64).collect()),
        DType::F32 => Decoded::Floats(chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
    }
}

struct Parsed {
    kind: PayloadKind,
    flags: u8,
    neuron_count: usize,
    area_count: usize,
    base: FrameKey,
    other: Option<FrameKey>,
    columns: Vec<(NeuronProperty, Decoded)>,
    triplets: Vec<(u16, u16, i64)>,
}

fn scenario_code(code: u8) -> Result<Scenario> {
    Scenario::from_code(code).ok_or_else(|| Error::Payload(format!("unknown scenario code {code}")))
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    let r = Reader { bytes };
    if r.slice(0, 4)? != FRAME_MAGIC {
        return Err(Error::Payload("bad magic".into()));
    }
    let version = r.u8(4)?;
    if version != VERSION {
        return Err(Error::Payload(format!("unsupported version {version}")));
    }
    let kind = match r.u8(5)? {
        1 => PayloadKind::Frame,
        2 => PayloadKind::Diff,
        other => return Err(Error::Payload(format!("unknown payload kind {other}"))),
    };
    let flags = r.u8(6)?;
    let column_count = r.u8(7)? as usize;
    let n = r.u32(8)? as usize;
    let area_count = r.u16(12)? as usize;
    let base = FrameKey {
        scenario: scenario_code(r.u8(16)?)?,
        timestep: r.u32(20)?,
    };
    let other = match r.u8(17)? {
        NO_SCENARIO => None,
        code => Some(FrameKey {
            scenario: scenario_code(code)?,
            timestep: r.u32(24)?,
        }),
    };
    let triplet_count = r.u32(28)? as usize;
    let triplet_offset = r.u32(32)? as usize;
    let total = r.u32(36)? as usize;
    if total != bytes.len() {
        return Err(Error::Payload(format!("header says {total} bytes, got {}", bytes.len())));
    }

    let mut columns = Vec::with_capacity(column_count);
    for i in 0..column_count {
        let at = HEADER_LEN + i * DESCRIPTOR_LEN;
        let property = NeuronProperty::from_code(r.u8(at)?)
            .ok_or_else(|| Error::Payload(format!("unknown property code in descriptor {i}")))?;
        let dtype = DType::from_code(r.u8(at + 1)?)?;
        let offset = r.u32(at + 4)? as usize;
        let len = r.u32(at + 8)? as usize;
        if len != dtype.byte_len(n) {
            return Err(Error::Payload(format!("column {property}: {len} bytes for {n} values")));
        }
        columns.push((property, decode_column(r.slice(offset, len)?, dtype, n)));
    }

    let body = r.slice(triplet_offset, triplet_count * 8)?;
    let triplets = body
        .chunks_exact(8)
        .map(|c| {
            let s = u16::from_le_bytes([c[0], c[1]]);
            let t = u16::from_le_bytes([c[2], c[3]]);
            let raw = [c[4], c[5], c[6], c[7]];
            let v = match kind {
                PayloadKind::Frame => u32::from_le_bytes(raw) as i64,
                PayloadKind::Diff => i32::from_le_bytes(raw) as i64,
            };
            (s, t, v)
        })
        .collect();

    Ok(Parsed {
        kind,
        flags,
        neuron_count: n,
        area_count,
        base,
        other,
        columns,
        triplets,
    })
}

impl Parsed {
    fn take(&mut self, property: NeuronProperty) -> Result<Decoded> {
        let idx = self
            .columns
            .iter()
            .position(|(p, _)| *p == property)
            .ok_or_else(|| Error::Payload(format!("column {property} missing")))?;
        Ok(self.columns.swap_remove(idx).1)
    }

    fn floats(&mut self, property: NeuronProperty) -> Result<Vec<f32>> {
        match self.take(property)? {
            Decoded::Floats(v) => Ok(v),
            _ => Err(Error::Payload(format!("column {property} is not f32"))),
        }
    }

    fn ints(&mut self, property: NeuronProperty) -> Result<Vec<i64>> {
        match self.take(property)? {
            Decoded::Ints(v) => Ok(v),
            _ => Err(Error::Payload(format!("column {property} is not integer"))),
        }
    }

    fn unsigned(&mut self, property: NeuronProperty) -> Result<Vec<u32>> {
        self.ints(property)?
            .into_iter()
            .map(|v| u32::try_from(v).map_err(|_| Error::Payload(format!("negative {property}"))))
            .collect()
    }
}

pub fn decode_frame(bytes: &[u8]) -> Result<TimestepFrame> {
    let mut p = parse(bytes)?;
    if p.kind != PayloadKind::Frame {
        return Err(Error::Payload("expected a frame payload".into()));
    }
    let fired = match p.take(NeuronProperty::Fired)? {
        Decoded::Bits(v) => v,
        Decoded::Ints(v) => v.into_iter().map(|x| x != 0).collect(),
        Decoded::Floats(_) => return Err(Error::Payload("fired column is f32".into())),
    };
    let columns = FrameColumns {
        calcium: p.floats(NeuronProperty::Calcium)?,
        calcium_target_delta: p.floats(NeuronProperty::CalciumTargetDelta)?,
        fired,
        fired_fraction: p.floats(NeuronProperty::FiredFraction)?,
        grown_axons: p.floats(NeuronProperty::GrownAxons)?,
        grown_dendrites: p.floats(NeuronProperty::GrownDendrites)?,
        synapses_out: p.unsigned(NeuronProperty::SynapsesOut)?,
        synapses_in: p.unsigned(NeuronProperty::SynapsesIn)?,
    };
    columns.validate(p.neuron_count)?;
    let connectivity = AreaConnectivity::from_triplets(
        p.area_count,
        p.triplets.iter().map(|(s, t, v)| (*s, *t, *v as u32)),
    )?;
    Ok(TimestepFrame {
        scenario: p.base.scenario,
        timestep: p.base.timestep,
        columns,
        connectivity,
        connectivity_status: if p.flags & FLAG_BASE_MISSING != 0 {
            ConnectivityStatus::Missing
        } else {
            ConnectivityStatus::Present
        },
    })
}

pub fn decode_diff(bytes: &[u8]) -> Result<DiffFrame> {
    let mut p = parse(bytes)?;
    let other = match (p.kind, p.other) {
        (PayloadKind::Diff, Some(other)) => other,
        _ => return Err(Error::Payload("expected a diff payload".into())),
    };
    let fired = p
        .ints(NeuronProperty::Fired)?
        .into_iter()
        .map(|v| v as i8)
        .collect();
    let deltas = DiffColumns {
        calcium: p.floats(NeuronProperty::Calcium)?,
        calcium_target_delta: p.floats(NeuronProperty::CalciumTargetDelta)?,
        fired,
        fired_fraction: p.floats(NeuronProperty::FiredFraction)?,
        grown_axons: p.floats(NeuronProperty::GrownAxons)?,
        grown_dendrites: p.floats(NeuronProperty::GrownDendrites)?,
        synapses_out: p.ints(NeuronProperty::SynapsesOut)?,
        synapses_in: p.ints(NeuronProperty::SynapsesIn)?,
    };
    let a = p.area_count;
    let mut dense = vec![0i64; a * a];
    for (s, t, v) in &p.triplets {
        let (s, t) = (*s as usize, *t as usize);
        if s >= a || t >= a {
            return Err(Error::Payload(format!("area pair ({s}, {t}) outside {a} areas")));
        }
        dense[s * a + t] += v;
    }
    Ok(DiffFrame::new(p.base, other, deltas, a, dense))
}

/// Static neuron table as a fixed-record binary block.
pub fn encode_positions(neurons: &[NeuronStatic], area_count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(POSITIONS_HEADER_LEN + POSITION_RECORD_LEN * neurons.len());
    out.extend_from_slice(&POSITIONS_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(neurons.len() as u32).to_le_bytes());
    out.extend_from_slice(&(area_count as u16).to_le_bytes());
    out.extend_from_slice(&(POSITION_RECORD_LEN as u16).to_le_bytes());
    for n in neurons {
        out.extend_from_slice(&n.neuron_id.to_le_bytes());
        for x in n.position {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&n.cluster_id.to_le_bytes());
        out.push(n.cluster_slot);
        out.push(0);
        out.extend_from_slice(&n.area_id.to_le_bytes());
    }
    out
}

/// Returns the neuron records and the area count from a positions block.
pub fn decode_positions(bytes: &[u8]) -> Result<(Vec<NeuronStatic>, usize)> {
    let r = Reader { bytes };
    if r.slice(0, 4)? != POSITIONS_MAGIC {
        return Err(Error::Payload("bad positions magic".into()));
    }
    if r.u8(4)? != VERSION {
        return Err(Error::Payload("unsupported positions version".into()));
    }
    let n = r.u32(8)? as usize;
    let areas = r.u16(12)? as usize;
    let record = r.u16(14)? as usize;
    if record != POSITION_RECORD_LEN || bytes.len() != POSITIONS_HEADER_LEN + n * record {
        return Err(Error::Payload(format!(
            "{} bytes does not hold {n} records of {record}",
            bytes.len()
        )));
    }
    let f32_at = |at: usize| r.u32(at).map(f32::from_bits);
    (0..n)
        .map(|i| {
            let at = POSITIONS_HEADER_LEN + i * record;
            Ok(NeuronStatic {
                neuron_id: r.u32(at)?,
                position: [f32_at(at + 4)?, f32_at(at + 8)?, f32_at(at + 12)?],
                cluster_id: r.u32(at + 16)?,
                cluster_slot: r.u8(at + 20)?,
                area_id: r.u16(at + 22)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| (v, areas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::diff_frames;
    use proptest::prelude::*;

    fn frame(n: usize, big_counts: bool) -> TimestepFrame {
        let mut c = FrameColumns::with_capacity(n);
        for i in 0..n {
            c.calcium.push(i as f32 * 0.37);
            c.calcium_target_delta.push(-(i as f32));
            c.fired.push(i % 3 == 1);
            c.fired_fraction.push(0.25);
            c.grown_axons.push(f32::MIN_POSITIVE);
            c.grown_dendrites.push(i as f32);
            c.synapses_out.push(if big_counts { 70_000 + i as u32 } else { i as u32 });
            c.synapses_in.push(300);
        }
        TimestepFrame {
            scenario: Scenario::CalciumTargets,
            timestep: 77,
            columns: c,
            connectivity: AreaConnectivity::from_triplets(3, [(0, 2, 9), (1, 1, u32::MAX)]).unwrap(),
            connectivity_status: ConnectivityStatus::Present,
        }
    }

    fn dtypes(bytes: &[u8]) -> Vec<(u8, u8)> {
        (0..bytes[7] as usize)
            .map(|i| (bytes[HEADER_LEN + i * 12], bytes[HEADER_LEN + i * 12 + 1]))
            .collect()
    }

    #[test]
    fn frame_round_trip() {
        for n in [0, 1, 9, 10, 33] {
            let f = frame(n, n == 33);
            let bytes = encode_frame(&f).unwrap();
            assert_eq!(&bytes[..4], b"PLSF");
            assert_eq!(decode_frame(&bytes).unwrap(), f, "n = {n}");
        }
    }

    #[test]
    fn integer_columns_narrow() {
        let bytes = encode_frame(&frame(10, false)).unwrap();
        let d = dtypes(&bytes);
        assert!(d.contains(&(NeuronProperty::Fired.code(), DType::Bit as u8)));
        assert!(d.contains(&(NeuronProperty::SynapsesOut.code(), DType::U8 as u8)));
        assert!(d.contains(&(NeuronProperty::SynapsesIn.code(), DType::U16 as u8)));
        let bytes = encode_frame(&frame(10, true)).unwrap();
        assert!(dtypes(&bytes).contains(&(NeuronProperty::SynapsesOut.code(), DType::U32 as u8)));
    }

    #[test]
    fn diff_round_trip() {
        let mut a = frame(20, false);
        a.connectivity = AreaConnectivity::from_triplets(3, [(1, 1, 40)]).unwrap();
        let mut b = frame(20, true);
        b.timestep = 80;
        b.connectivity = AreaConnectivity::from_triplets(3, [(0, 2, 2)]).unwrap();
        let d = diff_frames(&a, &b).unwrap();
        let bytes = encode_diff(&d, false, true).unwrap();
        assert_eq!(bytes[6], FLAG_OTHER_MISSING);
        assert_eq!(decode_diff(&bytes).unwrap(), d);
        assert!(decode_frame(&bytes).is_err());
    }

    #[test]
    fn diff_delta_overflow_is_rejected() {
        let mut a = frame(2, false);
        let mut b = a.clone();
        a.connectivity = AreaConnectivity::zeros(3);
        b.connectivity = AreaConnectivity::from_triplets(3, [(0, 0, u32::MAX)]).unwrap();
        let d = diff_frames(&a, &b).unwrap();
        assert!(encode_diff(&d, false, false).is_err());
    }

    #[test]
    fn corrupt_payloads() {
        let bytes = encode_frame(&frame(10, false)).unwrap();
        assert!(decode_frame(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_frame(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_frame(&bad).is_err());
        assert!(decode_frame(&[]).is_err());
    }

    #[test]
    fn positions_round_trip() {
        let neurons: Vec<NeuronStatic> = (0..10u32)
            .map(|i| NeuronStatic {
                neuron_id: i,
                position: [i as f32, -0.5, 1e9],
                cluster_id: 0,
                cluster_slot: i as u8,
                area_id: 3,
            })
            .collect();
        let bytes = encode_positions(&neurons, 4);
        assert_eq!(bytes.len(), POSITIONS_HEADER_LEN + 10 * POSITION_RECORD_LEN);
        assert_eq!(decode_positions(&bytes).unwrap(), (neurons, 4));
    }

    proptest! {
        #[test]
        fn arbitrary_frames_round_trip(
            rows in proptest::collection::vec(
                (any::<f32>(), any::<bool>(), 0f32..=1.0, any::<u32>(), 0u32..300),
                0..64,
            ),
            conn in proptest::collection::vec((0u16..4, 0u16..4, 1u32..1000), 0..10),
        ) {
            let mut c = FrameColumns::with_capacity(rows.len());
            for (x, fired, frac, big, small) in &rows {
                c.calcium.push(*x);
                c.calcium_target_delta.push(-*x);
                c.fired.push(*fired);
                c.fired_fraction.push(*frac);
                c.grown_axons.push(*x * 0.5);
                c.grown_dendrites.push(*frac);
                c.synapses_out.push(*big);
                c.synapses_in.push(*small);
            }
            let f = TimestepFrame {
                scenario: Scenario::Learning,
                timestep: rows.len() as u32,
                columns: c,
                connectivity: AreaConnectivity::from_triplets(4, conn).unwrap(),
                connectivity_status: ConnectivityStatus::Present,
            };
            let back = decode_frame(&encode_frame(&f).unwrap()).unwrap();
            // compare bits so NaN payloads count as equal
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.columns.calcium), bits(&f.columns.calcium));
            prop_assert_eq!(bits(&back.columns.grown_axons), bits(&f.columns.grown_axons));
            prop_assert_eq!(&back.columns.fired, &f.columns.fired);
            prop_assert_eq!(&back.columns.synapses_out, &f.columns.synapses_out);
            prop_assert_eq!(&back.columns.synapses_in, &f.columns.synapses_in);
            prop_assert_eq!(&back.connectivity, &f.connectivity);
        }
    }
}
