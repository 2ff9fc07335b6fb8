//! Timestamp and histogram files.
//!
//! Each channel is a raw stream of little-endian `i64` picosecond
//! timestamps. A JSON sidecar names the channel files and carries the
//! channel models and acquisition length. Histograms are CSV with a
//! `bin_center_ps,counts` header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::histogram::CoincidenceHistogram;
use super::stream::{ChannelSet, PhotonChannelModel, TimestampSet};
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "ringlock-timestamps";
pub const TIMESTAMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub name: String,
    /// File name relative to the sidecar.
    pub file: String,
    pub events: usize,
    pub model: Option<PhotonChannelModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampSidecar {
    pub format: String,
    pub version: u32,
    pub time_unit: String,
    pub duration_ps: i64,
    pub channels: Vec<ChannelEntry>,
}

pub fn write_stamps<W: Write>(stamps: &[i64], mut w: W) -> Result<()> {
    for t in stamps {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stamps<R: Read>(mut r: R) -> Result<Vec<i64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Io(format!(
            "timestamp stream length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

const CHANNEL_NAMES: [&str; 3] = ["idler", "signal_1", "signal_2"];

/// Write `<stem>_<channel>.bin` files and `<stem>.json` into `dir`;
/// returns the sidecar path.
pub fn save_timestamps(dir: &Path, stem: &str, ts: &TimestampSet, channels: Option<&ChannelSet>) -> Result<PathBuf> {
    let streams = [&ts.idler, &ts.signal_1, &ts.signal_2];
    let models = channels.map(|c| [c.idler, c.signal_1, c.signal_2]);
    let mut entries = Vec::new();
    for (k, name) in CHANNEL_NAMES.iter().enumerate() {
        let file = format!("{stem}_{name}.bin");
        write_stamps(streams[k], BufWriter::new(File::create(dir.join(&file))?))?;
        entries.push(ChannelEntry {
            name: name.to_string(),
            file,
            events: streams[k].len(),
            model: models.map(|m| m[k]),
        });
    }
    let sidecar = TimestampSidecar {
        format: TIMESTAMP_FORMAT.into(),
        version: TIMESTAMP_VERSION,
        time_unit: "ps".into(),
        duration_ps: ts.duration_ps,
        channels: entries,
    };
    let path = dir.join(format!("{stem}.json"));
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path)
}

pub fn load_timestamps(sidecar: &Path) -> Result<TimestampSet> {
    let meta: TimestampSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar)?))?;
    if meta.format != TIMESTAMP_FORMAT || meta.version != TIMESTAMP_VERSION {
        return Err(Error::Io(format!(
            "unsupported timestamp file {} v{}",
            meta.format, meta.version
        )));
    }
    if meta.time_unit != "ps" {
        return Err(Error::Io(format!("unsupported time unit {}", meta.time_unit)));
    }
    let dir = sidecar.parent().unwrap_or_else(|| Path::new("."));
    let mut streams: [Vec<i64>; 3] = Default::default();
    for (k, name) in CHANNEL_NAMES.iter().enumerate() {
        let entry = meta
            .channels
            .iter()
            .find(|c| c.name == *name)
            .ok_or_else(|| Error::Io(format!("sidecar lacks channel {name}")))?;
        let stamps = read_stamps(BufReader::new(File::open(dir.join(&entry.file))?))?;
        if stamps.len() != entry.events {
            return Err(Error::Io(format!(
                "channel {name}: sidecar lists {} events, file holds {}",
                entry.events,
                stamps.len()
            )));
        }
        if !stamps.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::Io(format!("channel {name} is not sorted")));
        }
        streams[k] = stamps;
    }
    let [idler, signal_1, signal_2] = streams;
    Ok(TimestampSet {
        idler,
        signal_1,
        signal_2,
        duration_ps: meta.duration_ps,
    })
}

pub fn write_histogram_csv<W: Write>(h: &CoincidenceHistogram, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_center_ps", "counts"])?;
    for (k, c) in h.counts.iter().enumerate() {
        let center = h.origin_ps as f64 + (k as f64 + 0.5) * h.bin_ps as f64;
        out.write_record([center.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a histogram written by [`write_histogram_csv`]. Bin centers must be
/// uniformly spaced by a whole number of picoseconds.
pub fn read_histogram_csv<R: Read>(r: R, integration_ps: i64) -> Result<CoincidenceHistogram> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut centers = Vec::new();
    let mut counts = Vec::new();
    for rec in rdr.deserialize() {
        let (c, n): (f64, u64) = rec?;
        centers.push(c);
        counts.push(n);
    }
    if centers.len() < 2 {
        return Err(Error::Io("histogram needs at least two bins".into()));
    }
    let bin = centers[1] - centers[0];
    let bin_ps = bin.round() as i64;
    if bin_ps < 1 || (bin - bin_ps as f64).abs() > 1e-6 {
        return Err(Error::Io("histogram bins are not whole picoseconds".into()));
    }
    let uniform = centers.windows(2).all(|w| ((w[1] - w[0]) - bin).abs() < 1e-6);
    if !uniform {
        return Err(Error::Io("histogram bins are not uniform".into()));
    }
    Ok(CoincidenceHistogram {
        bin_ps,
        origin_ps: (centers[0] - 0.5 * bin).round() as i64,
        counts,
        integration_ps,
    })
}
