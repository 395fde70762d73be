//! Trace files: one CSV record per event, gzip-compressed when the path ends
//! in `.gz`.
//!
//! ```text
//! timestamp_s,uav_id,subgroup,service,seq,size_bytes
//! 0.000412,17,rich,telemetry,0,100
//! ```
//!
//! Timestamps are written with exactly six decimals, so a trace round-trips
//! to the microsecond.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use super::PacketEvent;

pub const TRACE_HEADER: [&str; 6] = [
    "timestamp_s",
    "uav_id",
    "subgroup",
    "service",
    "seq",
    "size_bytes",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("trace CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trace record at line {line}: {message}")]
    Format { line: u64, message: String },
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Formats microseconds as seconds with six decimals.
pub fn format_timestamp(us: u64) -> String {
    format!("{}.{:06}", us / 1_000_000, us % 1_000_000)
}

/// Parses a non-negative decimal seconds value into whole microseconds.
/// At most six fractional digits are accepted.
pub fn parse_timestamp(s: &str) -> Option<u64> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || frac.len() > 6 {
        return None;
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = whole.parse().ok()?;
    let mut micros: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..6 {
        micros *= 10;
    }
    secs.checked_mul(1_000_000)?.checked_add(micros)
}

enum Output {
    Plain(BufWriter<File>),
    Gzip(GzEncoder<BufWriter<File>>),
}

impl Write for Output {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Self::Plain(w) => w.write(buf),
            Self::Gzip(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Self::Plain(w) => w.flush(),
            Self::Gzip(w) => w.flush(),
        }
    }
}

/// Streaming trace writer.
pub struct TraceWriter {
    csv: csv::Writer<Output>,
    written: u64,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        let file = BufWriter::new(File::create(path)?);
        let out = if is_gzip(path) {
            // The gzip header carries mtime 0, so output is reproducible.
            Output::Gzip(GzEncoder::new(file, Compression::default()))
        } else {
            Output::Plain(file)
        };
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        csv.write_record(TRACE_HEADER)?;
        Ok(Self { csv, written: 0 })
    }

    pub fn write(&mut self, e: &PacketEvent) -> Result<(), TraceError> {
        self.csv.write_record([
            format_timestamp(e.timestamp_us).as_str(),
            e.uav_id.to_string().as_str(),
            e.subgroup.name(),
            e.service.name(),
            e.seq.to_string().as_str(),
            e.size.to_string().as_str(),
        ])?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Flushes buffers and writes the gzip trailer, if any.
    pub fn finish(self) -> Result<u64, TraceError> {
        let out = self
            .csv
            .into_inner()
            .map_err(|e| TraceError::Io(e.into_error()))?;
        match out {
            Output::Plain(mut w) => w.flush()?,
            Output::Gzip(gz) => gz.finish()?.flush()?,
        }
        Ok(self.written)
    }
}

/// Streaming trace reader yielding events in file order.
pub struct TraceReader {
    records: csv::StringRecordsIntoIter<Box<dyn Read>>,
}

impl TraceReader {
    pub fn open(path: &Path) -> Result<Self, TraceError> {
        let file = BufReader::new(File::open(path)?);
        let input: Box<dyn Read> = if is_gzip(path) {
            Box::new(MultiGzDecoder::new(file))
        } else {
            Box::new(file)
        };
        Self::from_reader(input)
    }

    pub fn from_reader(input: Box<dyn Read>) -> Result<Self, TraceError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers()?.clone();
        if header.iter().ne(TRACE_HEADER) {
            return Err(TraceError::Format {
                line: 1,
                message: format!(
                    "expected header `{}`, found `{}`",
                    TRACE_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        Ok(Self {
            records: reader.into_records(),
        })
    }
}

fn parse_record(rec: &csv::StringRecord) -> Result<PacketEvent, TraceError> {
    let line = rec.position().map_or(0, |p| p.line());
    let bad = |message: String| TraceError::Format { line, message };
    if rec.len() != 6 {
        return Err(bad(format!("expected 6 fields, found {}", rec.len())));
    }
    let timestamp_us =
        parse_timestamp(&rec[0]).ok_or_else(|| bad(format!("bad timestamp `{}`", &rec[0])))?;
    let uav_id = rec[1]
        .parse()
        .map_err(|_| bad(format!("bad uav_id `{}`", &rec[1])))?;
    let subgroup = rec[2].parse().map_err(bad)?;
    let service = rec[3].parse().map_err(bad)?;
    let seq = rec[4]
        .parse()
        .map_err(|_| bad(format!("bad seq `{}`", &rec[4])))?;
    let size = rec[5]
        .parse()
        .map_err(|_| bad(format!("bad size_bytes `{}`", &rec[5])))?;
    Ok(PacketEvent {
        timestamp_us,
        uav_id,
        subgroup,
        service,
        seq,
        size,
    })
}

impl Iterator for TraceReader {
    type Item = Result<PacketEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        Some(rec.map_err(TraceError::from).and_then(|r| parse_record(&r)))
    }
}

/// Reads every event of a trace file into memory.
pub fn read_trace(path: &Path) -> Result<Vec<PacketEvent>, TraceError> {
    TraceReader::open(path)?.collect()
}

/// Counts the non-header lines of a plain or gzip trace without parsing them.
pub fn count_records(path: &Path) -> Result<u64, TraceError> {
    let file = BufReader::new(File::open(path)?);
    let input: Box<dyn BufRead> = if is_gzip(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    };
    let lines = input.lines().try_fold(0u64, |n, l| l.map(|_| n + 1))?;
    Ok(lines.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ServiceClass, Subgroup};

    fn sample() -> Vec<PacketEvent> {
        (0..50u64)
            .map(|k| PacketEvent {
                timestamp_us: k * 123_457,
                uav_id: (k % 7) as u32,
                subgroup: Subgroup::from_index((k % 3) as usize).unwrap(),
                service: ServiceClass::from_index((k % 3) as usize).unwrap(),
                seq: k,
                size: 100 + k,
            })
            .collect()
    }

    #[test]
    fn timestamps_are_exact() {
        assert_eq!(format_timestamp(0), "0.000000");
        assert_eq!(format_timestamp(59_999_999), "59.999999");
        assert_eq!(parse_timestamp("59.999999"), Some(59_999_999));
        assert_eq!(parse_timestamp("1.5"), Some(1_500_000));
        assert_eq!(parse_timestamp("3"), Some(3_000_000));
        assert_eq!(parse_timestamp("1.1234567"), None);
        assert_eq!(parse_timestamp("-1.0"), None);
        assert_eq!(parse_timestamp(".5"), None);
    }

    #[test]
    fn plain_and_gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["t.csv", "t.csv.gz"] {
            let path = dir.path().join(name);
            let mut w = TraceWriter::create(&path).unwrap();
            for e in sample() {
                w.write(&e).unwrap();
            }
            assert_eq!(w.finish().unwrap(), 50);
            assert_eq!(read_trace(&path).unwrap(), sample());
            assert_eq!(count_records(&path).unwrap(), 50);
        }
    }

    #[test]
    fn header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        TraceWriter::create(&path).unwrap().finish().unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "timestamp_s,uav_id,subgroup,service,seq,size_bytes\n"
        );
        assert!(read_trace(&path).unwrap().is_empty());
    }

    #[test]
    fn bad_records_are_located() {
        let text = "timestamp_s,uav_id,subgroup,service,seq,size_bytes\n\
                    0.000001,1,poor,telemetry,0,10\n\
                    0.000002,1,poor,video,1,10\n";
        let reader = TraceReader::from_reader(Box::new(io::Cursor::new(text))).unwrap();
        let results: Vec<_> = reader.collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(TraceError::Format { line, message }) => {
                assert_eq!(*line, 3);
                assert!(message.contains("video"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let r = TraceReader::from_reader(Box::new(io::Cursor::new("a,b,c\n1,2,3\n")));
        assert!(matches!(r, Err(TraceError::Format { line: 1, .. })));
    }
}
