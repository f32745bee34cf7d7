use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ibm::{ibm_to_ieee, ieee_be_to_f64};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const TEXT_HEADER_LEN: usize = 3200;
pub const BINARY_HEADER_LEN: usize = 400;
pub const TRACE_HEADER_LEN: usize = 240;
pub const DATA_START: usize = TEXT_HEADER_LEN + BINARY_HEADER_LEN;

/// 1-based byte positions (within a 240-byte trace header) of the line keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyOffsets {
    pub inline: usize,
    pub crossline: usize,
}

impl Default for KeyOffsets {
    fn default() -> Self {
        KeyOffsets { inline: 189, crossline: 193 }
    }
}

impl KeyOffsets {
    fn validate(&self) -> Result<()> {
        for (name, at) in [("inline", self.inline), ("crossline", self.crossline)] {
            if at == 0 || at + 3 > TRACE_HEADER_LEN {
                return Err(Error::Config(format!(
                    "{name} key byte {at} does not fit a {TRACE_HEADER_LEN}-byte trace header"
                )));
            }
        }
        Ok(())
    }
}

/// Sample encoding of the trace data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Ibm,
    Ieee,
}

impl SampleFormat {
    pub fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(SampleFormat::Ibm),
            5 => Ok(SampleFormat::Ieee),
            other => Err(Error::Format(format!(
                "unsupported data format code {other} (only 1 = IBM float and 5 = IEEE float)"
            ))),
        }
    }

    pub fn code(self) -> u16 {
        match self {
            SampleFormat::Ibm => 1,
            SampleFormat::Ieee => 5,
        }
    }

    pub fn decode(self, word: u32) -> f64 {
        match self {
            SampleFormat::Ibm => ibm_to_ieee(word),
            SampleFormat::Ieee => ieee_be_to_f64(word),
        }
    }
}

/// Which family of vertical sections to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Inline,
    Crossline,
}

impl Axis {
    pub fn tag(self) -> &'static str {
        match self {
            Axis::Inline => "inline",
            Axis::Crossline => "crossline",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inline" | "il" => Ok(Axis::Inline),
            "crossline" | "xl" => Ok(Axis::Crossline),
            other => Err(Error::Config(format!("unknown axis {other:?} (inline or crossline)"))),
        }
    }
}

/// Location of one trace in the file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub ordinal: usize,
    pub inline: i32,
    pub crossline: i32,
    pub offset: u64,
}

impl TraceEntry {
    pub fn key(&self, axis: Axis) -> i32 {
        match axis {
            Axis::Inline => self.inline,
            Axis::Crossline => self.crossline,
        }
    }
}

/// An opened SEG-Y file: headers plus a trace index; amplitudes stay on disk.
#[derive(Clone, Debug)]
pub struct SegyVolume {
    pub path: PathBuf,
    pub text_header: Vec<u8>,
    pub sample_interval_us: u16,
    pub samples_per_trace: usize,
    pub format: SampleFormat,
    pub traces: Vec<TraceEntry>,
}

/// A vertical slice: `amplitudes` is `[time x traces]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeismicSection {
    pub amplitudes: Tensor<f64>,
    pub axis: Axis,
    pub line: i32,
    pub twt_ms: Vec<f64>,
    pub trace_keys: Vec<i32>,
}

fn be_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([bytes[at], bytes[at + 1]])
}

fn be_i32(bytes: &[u8], at: usize) -> i32 {
    i32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses the headers and indexes every trace by its line keys.
pub fn open_volume(path: &Path, keys: KeyOffsets) -> Result<SegyVolume> {
    keys.validate()?;
    let name = path.display().to_string();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len < DATA_START as u64 {
        return Err(Error::Format(format!(
            "{name}: file is {len} bytes, shorter than the {DATA_START}-byte SEG-Y headers"
        )));
    }
    let mut head = vec![0u8; DATA_START];
    file.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    let binary = &head[TEXT_HEADER_LEN..];
    let sample_interval_us = be_u16(binary, 16);
    let samples_per_trace = be_u16(binary, 20) as usize;
    let format = SampleFormat::from_code(be_u16(binary, 24)).map_err(|e| Error::Format(format!("{name}: {e}")))?;
    let extended = be_u16(binary, 304) as u64;
    if samples_per_trace == 0 {
        return Err(Error::Format(format!("{name}: binary header declares 0 samples per trace")));
    }
    let trace_len = (TRACE_HEADER_LEN + 4 * samples_per_trace) as u64;
    let data_start = DATA_START as u64 + extended * TEXT_HEADER_LEN as u64;
    if len < data_start {
        return Err(Error::Format(format!(
            "{name}: {extended} extended textual headers declared but the file ends at byte {len}"
        )));
    }
    let body = len - data_start;
    let count = body / trace_len;
    if body % trace_len != 0 {
        return Err(Error::Format(format!(
            "{name}: trace {} is truncated ({} of {trace_len} bytes present)",
            count + 1,
            body % trace_len
        )));
    }
    let mut traces = Vec::with_capacity(count as usize);
    let mut header = [0u8; TRACE_HEADER_LEN];
    for i in 0..count {
        let offset = data_start + i * trace_len;
        file.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(path, e))?;
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let ordinal = i as usize + 1;
        let declared = be_u16(&header, 114) as usize;
        if declared != 0 && declared != samples_per_trace {
            return Err(Error::Format(format!(
                "{name}: trace {ordinal} declares {declared} samples but the binary header fixes {samples_per_trace}"
            )));
        }
        traces.push(TraceEntry {
            ordinal,
            inline: be_i32(&header, keys.inline - 1),
            crossline: be_i32(&header, keys.crossline - 1),
            offset,
        });
    }
    Ok(SegyVolume {
        path: path.to_path_buf(),
        text_header: head[..TEXT_HEADER_LEN].to_vec(),
        sample_interval_us,
        samples_per_trace,
        format,
        traces,
    })
}

impl SegyVolume {
    /// Distinct line numbers present along `axis`, ascending.
    pub fn lines(&self, axis: Axis) -> Vec<i32> {
        self.traces
            .iter()
            .map(|t| t.key(axis))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Reads every trace of one line into a `[samples x traces]` section.
    pub fn read_section(&self, axis: Axis, line: i32) -> Result<SeismicSection> {
        let other = match axis {
            Axis::Inline => Axis::Crossline,
            Axis::Crossline => Axis::Inline,
        };
        let mut members: Vec<&TraceEntry> = self.traces.iter().filter(|t| t.key(axis) == line).collect();
        if members.is_empty() {
            let lines = self.lines(axis);
            let range = match (lines.first(), lines.last()) {
                (Some(lo), Some(hi)) => format!("{lo}..={hi} ({} lines)", lines.len()),
                _ => "none (empty volume)".to_string(),
            };
            return Err(Error::NotFound(format!("{axis} {line} not in volume; available {axis}s: {range}")));
        }
        members.sort_by_key(|t| (t.key(other), t.ordinal));
        let n = self.samples_per_trace;
        let mut file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let mut raw = vec![0u8; 4 * n];
        let mut amplitudes = vec![0.0; n * members.len()];
        for (col, trace) in members.iter().enumerate() {
            file.seek(SeekFrom::Start(trace.offset + TRACE_HEADER_LEN as u64))
                .map_err(|e| Error::io(&self.path, e))?;
            file.read_exact(&mut raw).map_err(|e| Error::io(&self.path, e))?;
            for (row, word) in raw.chunks_exact(4).enumerate() {
                let v = self.format.decode(u32::from_be_bytes([word[0], word[1], word[2], word[3]]));
                if !v.is_finite() {
                    return Err(Error::Format(format!(
                        "{}: trace {} sample {} is not finite",
                        self.path.display(),
                        trace.ordinal,
                        row + 1
                    )));
                }
                amplitudes[row * members.len() + col] = v;
            }
        }
        let dt = self.sample_interval_us as f64 / 1000.0;
        Ok(SeismicSection {
            amplitudes: Tensor::new(&[n, members.len()], amplitudes)?,
            axis,
            line,
            twt_ms: (0..n).map(|i| i as f64 * dt).collect(),
            trace_keys: members.iter().map(|t| t.key(other)).collect(),
        })
    }
}

/// Free-function form of [`SegyVolume::read_section`].
pub fn read_section(volume: &SegyVolume, axis: Axis, line: i32) -> Result<SeismicSection> {
    volume.read_section(axis, line)
}
