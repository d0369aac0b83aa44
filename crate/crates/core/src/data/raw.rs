//! Binary dataset format.
//!
//! A directory holds `dataset.bin` and an optional `channels.txt`.
//!
//! `dataset.bin` starts with the 8-byte magic `VLACDS01`, followed by five
//! little-endian `u32`: record count, height, width, colour channels, and the
//! number of label channels. Each record is then its labels (`u16` LE each) and
//! its pixels (`u8`, row-major `H × W × C`).
//!
//! `channels.txt` names the label channels, one `name cardinality` pair per
//! line. Without it channels are called `channel1`, `channel2`, ... and their
//! cardinality is the largest label plus one.

use std::fs;
use std::path::Path;

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VLACDS01";
pub const DATA_FILE: &str = "dataset.bin";
pub const CHANNELS_FILE: &str = "channels.txt";
const HEADER_LEN: usize = 8 + 5 * 4;

pub fn encode_raw(dataset: &Dataset) -> Vec<u8> {
    let n = dataset.len();
    let c = dataset.num_label_channels();
    let mut out = Vec::with_capacity(HEADER_LEN + n * (2 * c + dataset.x_dim()));
    out.extend_from_slice(MAGIC);
    for v in [n, dataset.height, dataset.width, dataset.channels, c] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for i in 0..n {
        for &l in dataset.labels_of(i) {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(dataset.image(i));
    }
    out
}

/// Parses `dataset.bin` bytes; cardinalities default to the largest label plus one.
pub fn decode_raw(bytes: &[u8], channels: Option<Vec<(String, usize)>>) -> Result<Dataset> {
    let fail = |offset: usize, detail: String| Error::Format {
        offset: offset as u64,
        detail,
    };
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(fail(0, "missing dataset magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (n, h, w, ch, lc) = (field(0), field(1), field(2), field(3), field(4));
    if h == 0 || w == 0 || ch == 0 {
        return Err(fail(12, format!("zero image dimension {h}x{w}x{ch}")));
    }
    let x_dim = h * w * ch;
    let record = 2 * lc + x_dim;
    let expected = HEADER_LEN + n * record;
    if bytes.len() < expected {
        let complete = (bytes.len() - HEADER_LEN) / record;
        return Err(fail(
            HEADER_LEN + complete * record,
            format!("truncated record {complete} of {n}"),
        ));
    }
    if bytes.len() > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let mut pixels = Vec::with_capacity(n * x_dim);
    let mut labels = Vec::with_capacity(n * lc);
    for i in 0..n {
        let base = HEADER_LEN + i * record;
        for j in 0..lc {
            let o = base + 2 * j;
            labels.push(u16::from_le_bytes([bytes[o], bytes[o + 1]]));
        }
        pixels.extend_from_slice(&bytes[base + 2 * lc..base + record]);
    }
    let channels = match channels {
        Some(c) if c.len() != lc => {
            return Err(Error::invalid(format!("{} channel names for {lc} label channels", c.len())));
        }
        Some(c) => c,
        None => (0..lc)
            .map(|j| {
                let k = labels.iter().skip(j).step_by(lc).max().map_or(1, |&m| m as usize + 1);
                (format!("channel{}", j + 1), k)
            })
            .collect(),
    };
    Dataset::new(h, w, ch, channels, pixels, labels)
}

pub fn save_raw(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = dir.join(DATA_FILE);
    fs::write(&data, encode_raw(dataset)).map_err(|e| Error::io(&data, e))?;
    let names: String = dataset
        .label_channels
        .iter()
        .map(|(n, k)| format!("{n} {k}\n"))
        .collect();
    let path = dir.join(CHANNELS_FILE);
    fs::write(&path, names).map_err(|e| Error::io(&path, e))
}

fn parse_channels(text: &str) -> Result<Vec<(String, usize)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut it = line.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(name), Some(Ok(k)), None) if k > 0 => Ok((name.to_string(), k)),
                _ => Err(Error::invalid(format!("bad channel line `{line}`"))),
            }
        })
        .collect()
}

pub fn load_raw(dir: &Path) -> Result<Dataset> {
    let data = dir.join(DATA_FILE);
    let bytes = fs::read(&data).map_err(|e| Error::io(&data, e))?;
    let names = dir.join(CHANNELS_FILE);
    let channels = match fs::read_to_string(&names) {
        Ok(text) => Some(parse_channels(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&names, e)),
    };
    decode_raw(&bytes, channels)
}
