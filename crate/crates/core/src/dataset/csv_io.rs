use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::DatasetError;
use crate::ingest::StationMeta;
use crate::qc::StationSeries;
use crate::time::{format_utc, parse_utc, HourGrid};
use crate::NUM_VARIABLES;

/// Column order of a station file.
pub const STATION_COLUMNS: [&str; 10] = [
    "DATE",
    "LONGITUDE",
    "LATITUDE",
    "TMP",
    "DEW",
    "WND_ANGLE",
    "WND_RATE",
    "SLP",
    "MASK",
    "TIME_DIFF",
];

pub fn write_station_csv(series: &StationSeries, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_station_to(series, std::io::BufWriter::new(file))
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_station_to<W: Write>(series: &StationSeries, out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATION_COLUMNS)?;
    let lon = series.meta.longitude.to_string();
    let lat = series.meta.latitude.to_string();
    let mut record: Vec<String> = Vec::with_capacity(STATION_COLUMNS.len());
    for t in 0..series.len() {
        record.clear();
        record.push(format_utc(series.time_at(t)));
        record.push(lon.clone());
        record.push(lat.clone());
        record.extend(series.row(t).iter().map(f64::to_string));
        let base = t * NUM_VARIABLES;
        let mask: Vec<&str> = series.mask[base..base + NUM_VARIABLES]
            .iter()
            .map(|&m| if m { "1" } else { "0" })
            .collect();
        record.push(mask.join(";"));
        let diffs: Vec<String> = series.time_diff[base..base + NUM_VARIABLES]
            .iter()
            .map(i32::to_string)
            .collect();
        record.push(diffs.join(";"));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| DatasetError::Io {
        path: "<station csv>".into(),
        source: e,
    })?;
    Ok(())
}

/// Read a station file; the station id is the file stem.
pub fn read_station_csv(path: &Path) -> Result<StationSeries, DatasetError> {
    let station_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| DatasetError::Invalid(format!("no station id in path {}", path.display())))?;
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    read_station_from(station_id, std::io::BufReader::new(file))
}

pub fn read_station_from<R: Read>(station_id: &str, input: R) -> Result<StationSeries, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    for (i, expected) in STATION_COLUMNS.iter().enumerate() {
        let found = headers.get(i).unwrap_or("");
        if found != *expected {
            return Err(DatasetError::SchemaMismatch {
                context: format!("{station_id} header column {i}"),
                expected: expected.to_string(),
                found: found.to_string(),
            });
        }
    }
    if headers.len() != STATION_COLUMNS.len() {
        return Err(DatasetError::SchemaMismatch {
            context: format!("{station_id} header"),
            expected: format!("{} columns", STATION_COLUMNS.len()),
            found: format!("{} columns", headers.len()),
        });
    }

    let mut start = None;
    let mut lon_lat = None;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut time_diff = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != STATION_COLUMNS.len() {
            return Err(DatasetError::SchemaMismatch {
                context: format!("{station_id} row {row}"),
                expected: format!("{} columns", STATION_COLUMNS.len()),
                found: format!("{} columns", record.len()),
            });
        }
        let bad = |column: usize| DatasetError::ValueParse {
            row,
            column: STATION_COLUMNS[column].to_string(),
            value: record[column].to_string(),
        };
        let time = parse_utc(&record[0]).ok_or_else(|| bad(0))?;
        match start {
            None => start = Some(time),
            Some(s) => {
                if time != s + chrono::Duration::hours(row as i64) {
                    return Err(DatasetError::Invalid(format!(
                        "{station_id}: row {row} at {} breaks the hourly grid",
                        &record[0]
                    )));
                }
            }
        }
        let lon: f64 = record[1].parse().map_err(|_| bad(1))?;
        let lat: f64 = record[2].parse().map_err(|_| bad(2))?;
        lon_lat.get_or_insert((lon, lat));
        for col in 3..3 + NUM_VARIABLES {
            values.push(record[col].parse::<f64>().map_err(|_| bad(col))?);
        }
        let mask_parts: Vec<&str> = record[8].split(';').collect();
        if mask_parts.len() != NUM_VARIABLES {
            return Err(bad(8));
        }
        for part in mask_parts {
            mask.push(match part {
                "1" => true,
                "0" => false,
                _ => return Err(bad(8)),
            });
        }
        let diff_parts: Vec<&str> = record[9].split(';').collect();
        if diff_parts.len() != NUM_VARIABLES {
            return Err(bad(9));
        }
        for part in diff_parts {
            time_diff.push(part.parse::<i32>().map_err(|_| bad(9))?);
        }
    }
    let start = start.ok_or_else(|| DatasetError::Invalid(format!("{station_id}: no rows")))?;
    if !crate::time::is_on_hour(start) {
        return Err(DatasetError::Invalid(format!("{station_id}: first row is not on an hour")));
    }
    let (lon, lat) = lon_lat.expect("set with first row");
    let meta = StationMeta::new(station_id, lat, lon, None).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let grid = HourGrid::new(start, values.len() / NUM_VARIABLES);
    Ok(StationSeries {
        meta,
        grid,
        values,
        mask,
        time_diff,
    })
}
