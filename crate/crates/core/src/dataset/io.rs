//! Recording file formats: CSV with an annotation sidecar, the versioned
//! binary container, and the dataset manifest.
//!
//! CSV: a header row with the 22 canonical channel names, then one row of
//! samples per time step. Annotations live next to the data file with the
//! `.ann` extension, one `start,end,CH1;CH2;...` interval per line
//! (half-open step ranges, `#` comments allowed).
//!
//! Binary (all little-endian): magic `ICTALREC`, format version u32,
//! subject u32, rate f64, step count u64, channel count u32, row-major f64
//! samples, interval count u32, then per interval start u64, end u64,
//! channel count u32 and channel indices u32. Round trips are bit-exact.
//!
//! Manifest: `subject,path[,rate]` lines, paths relative to the manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{AnnotationInterval, DataError, Recording};
use crate::montage::{channel_index, CHANNEL_COUNT, CHANNEL_NAMES};

const MAGIC: &[u8; 8] = b"ICTALREC";
const FORMAT_VERSION: u32 = 1;

fn io_err(path: &Path, err: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn annotation_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("ann")
}

// ── CSV ─────────────────────────────────────────────────────────────────

/// Write a recording as CSV plus its `.ann` sidecar.
pub fn write_recording_csv(rec: &Recording, path: &Path) -> Result<(), DataError> {
    let mut out = String::with_capacity(rec.samples.len() * 8);
    out.push_str(&CHANNEL_NAMES.join(","));
    out.push('\n');
    for row in rec.samples.chunks(CHANNEL_COUNT) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;

    let mut ann = String::from("# start_step,end_step,channel;channel;...\n");
    for interval in &rec.annotations {
        let names: Vec<&str> = interval
            .channels
            .iter()
            .map(|&ch| CHANNEL_NAMES[ch])
            .collect();
        ann.push_str(&format!(
            "{},{},{}\n",
            interval.start,
            interval.end,
            names.join(";")
        ));
    }
    let ann_path = annotation_path(path);
    fs::write(&ann_path, ann).map_err(|e| io_err(&ann_path, e))?;
    Ok(())
}

/// Load a CSV recording; subject id and rate come from the manifest.
pub fn load_recording_csv(path: &Path, subject: u32, rate: f64) -> Result<Recording, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| DataError::MalformedHeader {
        detail: "empty file".to_string(),
    })?;
    let found: Vec<&str> = header.split(',').map(str::trim).collect();
    if found.len() != CHANNEL_COUNT {
        let missing = CHANNEL_NAMES
            .iter()
            .find(|name| !found.iter().any(|f| f.eq_ignore_ascii_case(name)))
            .copied()
            .unwrap_or("?");
        return Err(DataError::MalformedHeader {
            detail: format!(
                "expected {CHANNEL_COUNT} channels, got {}; missing `{missing}`",
                found.len()
            ),
        });
    }
    for (i, name) in found.iter().enumerate() {
        if !name.eq_ignore_ascii_case(CHANNEL_NAMES[i]) {
            return Err(DataError::MalformedHeader {
                detail: format!(
                    "column {i} is `{name}`, canonical order requires `{}`",
                    CHANNEL_NAMES[i]
                ),
            });
        }
    }

    let mut samples = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != CHANNEL_COUNT {
            return Err(DataError::MalformedHeader {
                detail: format!(
                    "row {} has {} cells, expected {CHANNEL_COUNT}",
                    row_idx + 1,
                    cells.len()
                ),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumericCell {
                row: row_idx + 1,
                column: col,
                value: cell.trim().to_string(),
            })?;
            samples.push(v);
        }
    }

    let annotations = load_annotations(&annotation_path(path))?;
    Recording::new(subject, rate, samples, annotations)
}

fn load_annotations(path: &Path) -> Result<Vec<AnnotationInterval>, DataError> {
    if !path.exists() {
        // A recording with no sidecar simply has no seizure annotations.
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut intervals = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(DataError::InvalidAnnotation {
                detail: format!("line {}: expected start,end,channels", line_idx + 1),
            });
        }
        let start: usize = parts[0].trim().parse().map_err(|_| DataError::InvalidAnnotation {
            detail: format!("line {}: bad start `{}`", line_idx + 1, parts[0]),
        })?;
        let end: usize = parts[1].trim().parse().map_err(|_| DataError::InvalidAnnotation {
            detail: format!("line {}: bad end `{}`", line_idx + 1, parts[1]),
        })?;
        let mut channels = Vec::new();
        for name in parts[2].split(';') {
            let idx = channel_index(name).ok_or_else(|| DataError::UnknownChannel {
                name: name.trim().to_string(),
            })?;
            channels.push(idx);
        }
        intervals.push(AnnotationInterval {
            start,
            end,
            channels,
        });
    }
    Ok(intervals)
}

// ── Binary ──────────────────────────────────────────────────────────────

pub fn write_recording_bin(rec: &Recording, path: &Path) -> Result<(), DataError> {
    let mut buf: Vec<u8> = Vec::with_capacity(rec.samples.len() * 8 + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&rec.subject.to_le_bytes());
    buf.extend_from_slice(&rec.rate.to_le_bytes());
    buf.extend_from_slice(&(rec.num_steps as u64).to_le_bytes());
    buf.extend_from_slice(&(CHANNEL_COUNT as u32).to_le_bytes());
    for v in &rec.samples {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(rec.annotations.len() as u32).to_le_bytes());
    for interval in &rec.annotations {
        buf.extend_from_slice(&(interval.start as u64).to_le_bytes());
        buf.extend_from_slice(&(interval.end as u64).to_le_bytes());
        buf.extend_from_slice(&(interval.channels.len() as u32).to_le_bytes());
        for &ch in &interval.channels {
            buf.extend_from_slice(&(ch as u32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&buf).map_err(|e| io_err(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::TruncatedBinary {
                path: self.path.to_path_buf(),
                detail: format!(
                    "needed {n} bytes for {what} at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_recording_bin(path: &Path) -> Result<Recording, DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(DataError::TruncatedBinary {
            path: path.to_path_buf(),
            detail: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(DataError::TruncatedBinary {
            path: path.to_path_buf(),
            detail: format!("unsupported format version {version}"),
        });
    }
    let subject = r.u32("subject")?;
    let rate = r.f64("rate")?;
    let num_steps = r.u64("step count")? as usize;
    let channels = r.u32("channel count")? as usize;
    if channels != CHANNEL_COUNT {
        return Err(DataError::MalformedHeader {
            detail: format!("binary file has {channels} channels, expected {CHANNEL_COUNT}"),
        });
    }
    let mut samples = Vec::with_capacity(num_steps * CHANNEL_COUNT);
    for _ in 0..num_steps * CHANNEL_COUNT {
        samples.push(r.f64("sample")?);
    }
    let n_intervals = r.u32("interval count")?;
    let mut annotations = Vec::with_capacity(n_intervals as usize);
    for _ in 0..n_intervals {
        let start = r.u64("interval start")? as usize;
        let end = r.u64("interval end")? as usize;
        let n_ch = r.u32("interval channel count")?;
        let mut chs = Vec::with_capacity(n_ch as usize);
        for _ in 0..n_ch {
            chs.push(r.u32("interval channel")? as usize);
        }
        annotations.push(AnnotationInterval {
            start,
            end,
            channels: chs,
        });
    }
    Recording::new(subject, rate, samples, annotations)
}

// ── Manifest ────────────────────────────────────────────────────────────

/// One manifest row: which file holds which subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub subject: u32,
    pub path: PathBuf,
    pub rate: f64,
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), DataError> {
    let mut out = String::from("# subject,path[,rate]\n");
    for e in entries {
        out.push_str(&format!("{},{}\n", e.subject, e.path.display()));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(DataError::Manifest {
                line: idx + 1,
                detail: "expected `subject,path[,rate]`".to_string(),
            });
        }
        let subject: u32 = parts[0].trim().parse().map_err(|_| DataError::Manifest {
            line: idx + 1,
            detail: format!("bad subject id `{}`", parts[0]),
        })?;
        let rate: f64 = if parts.len() == 3 {
            parts[2].trim().parse().map_err(|_| DataError::Manifest {
                line: idx + 1,
                detail: format!("bad rate `{}`", parts[2]),
            })?
        } else {
            super::EXPECTED_RATE
        };
        entries.push(ManifestEntry {
            subject,
            path: PathBuf::from(parts[1].trim()),
            rate,
        });
    }
    Ok(entries)
}

/// Load every recording named by a manifest. Relative paths resolve
/// against the manifest's directory; `.csv` and binary files may be mixed.
/// `scale` multiplies all samples (1.0 leaves them untouched).
pub fn load_dataset(manifest_path: &Path, scale: f64) -> Result<Vec<Recording>, DataError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let entries = load_manifest(manifest_path)?;
    let mut recordings = Vec::with_capacity(entries.len());
    for entry in entries {
        let full = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let mut rec = if full.extension().map(|e| e == "csv").unwrap_or(false) {
            load_recording_csv(&full, entry.subject, entry.rate)?
        } else {
            let rec = load_recording_bin(&full)?;
            if rec.subject != entry.subject {
                return Err(DataError::Manifest {
                    line: 0,
                    detail: format!(
                        "{} stores subject {}, manifest says {}",
                        full.display(),
                        rec.subject,
                        entry.subject
                    ),
                });
            }
            rec
        };
        rec.scale(scale);
        recordings.push(rec);
    }
    Ok(recordings)
}
