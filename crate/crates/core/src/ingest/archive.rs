use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{parse_record_line, IngestError, QualityPolicy, RawObservation, StationMeta, VariableCodec};

/// Prefix of the line that opens a station block.
pub const STATION_HEADER: &str = "#STATION";

/// Line accounting for one scan. `lines_read == lines_accepted + lines_rejected`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub lines_read: usize,
    pub lines_accepted: usize,
    pub lines_rejected: usize,
    pub stations: usize,
    pub reject_reasons: BTreeMap<String, usize>,
}

impl ScanReport {
    fn reject(&mut self, reason: &str) {
        self.lines_rejected += 1;
        *self.reject_reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn merge(mut self, other: &ScanReport) -> ScanReport {
        self.lines_read += other.lines_read;
        self.lines_accepted += other.lines_accepted;
        self.lines_rejected += other.lines_rejected;
        self.stations += other.stations;
        for (k, v) in &other.reject_reasons {
            *self.reject_reasons.entry(k.clone()).or_default() += v;
        }
        self
    }

    pub fn is_conserved(&self) -> bool {
        self.lines_read == self.lines_accepted + self.lines_rejected
    }
}

/// All observations from one station block, in file order.
#[derive(Clone, Debug)]
pub struct StationRecords {
    pub meta: StationMeta,
    pub observations: Vec<RawObservation>,
}

/// Streaming scanner over concatenated station blocks. Holds at most one
/// station's observations in memory.
pub struct ArchiveScanner<R> {
    reader: R,
    schema: Vec<VariableCodec>,
    policy: QualityPolicy,
    report: ScanReport,
    pending: Option<StationMeta>,
    done: bool,
}

pub fn scan_archive<R: BufRead>(reader: R, schema: &[VariableCodec], policy: &QualityPolicy) -> ArchiveScanner<R> {
    ArchiveScanner {
        reader,
        schema: schema.to_vec(),
        policy: policy.clone(),
        report: ScanReport::default(),
        pending: None,
        done: false,
    }
}

enum Line {
    Header(Result<StationMeta, IngestError>),
    Data(String),
}

impl<R: BufRead> ArchiveScanner<R> {
    pub fn report(&self) -> &ScanReport {
        &self.report
    }

    pub fn into_report(self) -> ScanReport {
        self.report
    }

    /// Drain the scanner, keeping only the report.
    pub fn finish(mut self) -> Result<ScanReport, IngestError> {
        for block in self.by_ref() {
            block?;
        }
        Ok(self.report)
    }

    fn next_line(&mut self) -> Result<Option<Line>, IngestError> {
        loop {
            let mut raw = Vec::new();
            if self.reader.read_until(b'\n', &mut raw)? == 0 {
                return Ok(None);
            }
            if raw.last() == Some(&b'\n') {
                raw.pop();
                if raw.last() == Some(&b'\r') {
                    raw.pop();
                }
            }
            let Ok(text) = String::from_utf8(raw) else {
                // non-UTF-8 bytes are a data error, counted like any other
                self.report.lines_read += 1;
                self.report.reject("non_ascii");
                continue;
            };
            if text.starts_with(STATION_HEADER) {
                return Ok(Some(Line::Header(parse_header(&text))));
            }
            return Ok(Some(Line::Data(text)));
        }
    }
}

fn parse_header(line: &str) -> Result<StationMeta, IngestError> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts[0] != STATION_HEADER || !(4..=5).contains(&parts.len()) {
        return Err(IngestError::BadStation(format!("bad station header `{line}`")));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| IngestError::BadStation(format!("bad number `{s}` in `{line}`")))
    };
    let elevation = match parts.get(4) {
        Some(s) if !s.is_empty() => Some(num(s)?),
        _ => None,
    };
    StationMeta::new(parts[1], num(parts[2])?, num(parts[3])?, elevation)
}

impl<R: BufRead> Iterator for ArchiveScanner<R> {
    type Item = Result<StationRecords, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut current: Option<StationRecords> = self.pending.take().map(|meta| StationRecords {
            meta,
            observations: Vec::new(),
        });
        loop {
            let line = match self.next_line() {
                Ok(Some(line)) => line,
                Ok(None) => {
                    self.done = true;
                    return current.map(Ok);
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            match line {
                Line::Header(Ok(meta)) => {
                    self.report.stations += 1;
                    match current {
                        Some(block) => {
                            self.pending = Some(meta);
                            return Some(Ok(block));
                        }
                        None => {
                            current = Some(StationRecords {
                                meta,
                                observations: Vec::new(),
                            })
                        }
                    }
                }
                Line::Header(Err(_)) => {
                    // lines under a bad header cannot be attributed to a station
                    self.report.lines_read += 1;
                    self.report.reject("bad_station_header");
                    if let Some(block) = current {
                        return Some(Ok(block));
                    }
                }
                Line::Data(text) => {
                    self.report.lines_read += 1;
                    let Some(block) = current.as_mut() else {
                        self.report.reject("no_station_header");
                        continue;
                    };
                    if text.trim().is_empty() {
                        self.report.reject("empty_line");
                        continue;
                    }
                    match parse_record_line(&text, &self.schema, &self.policy) {
                        Ok((_, obs)) => {
                            self.report.lines_accepted += 1;
                            block.observations.extend(obs);
                        }
                        Err(e) => {
                            let reason = match e {
                                IngestError::MalformedField { .. } => "malformed_field",
                                IngestError::BadTimestamp(_) => "bad_timestamp",
                                _ => "other",
                            };
                            self.report.reject(reason);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::default_schema;
    use std::io::Cursor;

    fn scan(text: &str) -> (Vec<StationRecords>, ScanReport) {
        let mut scanner = scan_archive(Cursor::new(text.as_bytes().to_vec()), &default_schema(), &QualityPolicy::default());
        let blocks: Vec<_> = scanner.by_ref().map(|b| b.unwrap()).collect();
        (blocks, scanner.into_report())
    }

    #[test]
    fn empty_stream() {
        let (blocks, report) = scan("");
        assert!(blocks.is_empty());
        assert_eq!(report, ScanReport::default());
    }

    #[test]
    fn counts_rejected_lines() {
        let text = "#STATION,A,40.0,-73.9\n\
            2023-01-01T00:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n\
            2023-01-01T01:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n\
            2023-01-01T02:00:00,+01x0,1,+0080,1,270,1,0030,1,10132,1\n\
            2023-01-01T03:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n";
        let (blocks, report) = scan(text);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].observations.len(), 3 * 5);
        assert_eq!(report.lines_read, 4);
        assert_eq!(report.lines_rejected, 1);
        assert_eq!(report.reject_reasons["malformed_field"], 1);
        assert!(report.is_conserved());
    }

    #[test]
    fn splits_station_blocks() {
        let text = "2023-01-01T00:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n\
            #STATION,A,40.0,-73.9,10\n\
            2023-01-01T00:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n\
            #STATION,B,-33.9,151.2\n\
            \n\
            2023-01-01T00:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\r\n\
            2023-01-01T01:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n";
        let (blocks, report) = scan(text);
        let ids: Vec<_> = blocks.iter().map(|b| b.meta.station_id.as_str()).collect();
        assert_eq!(ids, ["A", "B"]);
        assert_eq!(blocks[0].meta.elevation, Some(10.0));
        assert_eq!(blocks[1].observations.len(), 10);
        assert_eq!(report.reject_reasons["no_station_header"], 1);
        assert_eq!(report.reject_reasons["empty_line"], 1);
        assert_eq!(report.lines_read, 5);
        assert!(report.is_conserved());
    }

    #[test]
    fn invalid_utf8_is_counted() {
        let mut bytes = b"#STATION,A,0,0\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe, b'\n']);
        bytes.extend_from_slice(b"2023-01-01T00:00:00,+0130,1,+0080,1,270,1,0030,1,10132,1\n");
        let mut scanner = scan_archive(Cursor::new(bytes), &default_schema(), &QualityPolicy::default());
        let blocks: Vec<_> = scanner.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(blocks.len(), 1);
        let report = scanner.into_report();
        assert_eq!(report.reject_reasons["non_ascii"], 1);
        assert_eq!(report.lines_accepted, 1);
    }
}
