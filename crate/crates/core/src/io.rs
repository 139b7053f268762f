//! On-disk formats: binary signal files with a text sidecar, hop ground truth CSV,
//! coset directories and key=value configuration files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fh_signal::HopRecord;
use crate::mc_sampler::{CosetStreams, McConfig};
use crate::recovery::SegmentSolution;
use crate::signal::ComplexSignal;

pub const SIGNAL_MAGIC: &[u8; 4] = b"MCFH";
pub const SIGNAL_VERSION: u32 = 1;

/// Path of the metadata sidecar for a signal file (`x.sig` -> `x.sig.meta`).
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_samples(path: &Path, samples: &[Complex64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SIGNAL_MAGIC)?;
    w.write_all(&SIGNAL_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<Complex64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &header[..4] != SIGNAL_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != SIGNAL_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count * 16 {
        return Err(Error::Format(format!(
            "{}: header declares {count} samples but body holds {} bytes",
            path.display(),
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect())
}

/// Write `x` to `path` plus its `.meta` sidecar.
pub fn write_signal(path: &Path, x: &ComplexSignal) -> Result<()> {
    write_samples(path, &x.samples)?;
    let mut meta = BTreeMap::new();
    meta.insert("sample_interval_seconds".to_string(), format!("{:e}", x.sample_interval));
    meta.insert("start_time_seconds".to_string(), format!("{:e}", x.start_time));
    write_key_values(&meta_path(path), &meta)
}

pub fn read_signal(path: &Path) -> Result<ComplexSignal> {
    let samples = read_samples(path)?;
    let meta = read_key_values(&meta_path(path))?;
    let dt = parse_key::<f64>(&meta, "sample_interval_seconds")?;
    let t0 = parse_key::<f64>(&meta, "start_time_seconds")?;
    ComplexSignal::new(samples, dt, t0)
}

pub fn write_key_values(path: &Path, values: &BTreeMap<String, String>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in values {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Parse `key=value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&fs::read_to_string(path)?)
}

pub fn parse_key<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Format(format!("missing key {key}")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("key {key}: cannot parse {raw:?}")))
}

/// Comma-separated list of values, e.g. `1,2,5`.
pub fn parse_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Format(format!("cannot parse list item {s:?}")))
        })
        .collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_hops(path: &Path, hops: &[HopRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["radio", "hop", "carrier_hz", "phase_rad", "start_s", "duration_s"])?;
    for h in hops {
        w.write_record([
            h.radio_index.to_string(),
            h.hop_index.to_string(),
            format!("{:.17e}", h.carrier_hz),
            format!("{:.17e}", h.phase_rad),
            format!("{:.17e}", h.start_seconds),
            format!("{:.17e}", h.duration_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hops(path: &Path) -> Result<Vec<HopRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut hops = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(Error::Format(format!("hop row has {} fields", rec.len())));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad index {:?}", &rec[i])))
        };
        hops.push(HopRecord {
            radio_index: u(0)?,
            hop_index: u(1)?,
            carrier_hz: f(2)?,
            phase_rad: f(3)?,
            start_seconds: f(4)?,
            duration_seconds: f(5)?,
        });
    }
    Ok(hops)
}

/// Write `coset_{i}.sig` files and a `manifest.txt` into `dir`.
pub fn write_cosets(dir: &Path, streams: &CosetStreams, origin_hz: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &streams.config;
    for (i, s) in streams.streams.iter().enumerate() {
        write_samples(&dir.join(format!("coset_{i}.sig")), s)?;
    }
    let mut m = BTreeMap::new();
    m.insert("base_interval_seconds".into(), format!("{:e}", cfg.base_interval_seconds));
    m.insert("period".into(), cfg.period.to_string());
    m.insert("channel_count".into(), cfg.pattern.len().to_string());
    m.insert("pattern".into(), join(&cfg.pattern));
    m.insert("origin_time_seconds".into(), format!("{:e}", streams.origin_time));
    m.insert("origin_hz".into(), format!("{:e}", origin_hz));
    write_key_values(&dir.join("manifest.txt"), &m)
}

/// Read a coset directory; returns the streams and the baseband origin frequency.
pub fn read_cosets(dir: &Path) -> Result<(CosetStreams, f64)> {
    let m = read_key_values(&dir.join("manifest.txt"))?;
    let pattern = parse_list::<usize>(
        m.get("pattern")
            .ok_or_else(|| Error::Format("missing key pattern".into()))?,
    )?;
    let q = parse_key::<usize>(&m, "channel_count")?;
    if q != pattern.len() {
        return Err(Error::Format(format!(
            "manifest declares q = {q} but lists {} cosets",
            pattern.len()
        )));
    }
    let config = McConfig::new(
        parse_key(&m, "base_interval_seconds")?,
        parse_key(&m, "period")?,
        pattern,
    )?;
    let streams = (0..q)
        .map(|i| read_samples(&dir.join(format!("coset_{i}.sig"))))
        .collect::<Result<Vec<_>>>()?;
    if streams.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Format("coset files have unequal lengths".into()));
    }
    let origin_hz = m.get("origin_hz").map_or(Ok(0.0), |v| {
        v.parse()
            .map_err(|_| Error::Format(format!("bad origin_hz {v:?}")))
    })?;
    Ok((
        CosetStreams {
            streams,
            config,
            origin_time: parse_key(&m, "origin_time_seconds")?,
        },
        origin_hz,
    ))
}

pub const RECOVERY_HEADER: [&str; 8] = [
    "segment",
    "start_index",
    "solver",
    "support_size",
    "support_indices",
    "residual",
    "rank_Z",
    "wall_time_s",
];

/// One row per segment; support indices are space separated.
pub fn write_recovery_manifest(path: &Path, solutions: &[SegmentSolution]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECOVERY_HEADER)?;
    for s in solutions {
        let support = s
            .support
            .indices
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            s.segment_index.to_string(),
            s.start_index.to_string(),
            s.solver_id.to_string(),
            s.support.size().to_string(),
            support,
            format!("{:.6e}", s.residual_norm),
            s.rank_z.to_string(),
            format!("{:.6e}", s.wall_time_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}
