//! Forecast file: one header line
//! `# stationcast-forecast v1 N=<n> tau=<τ> V=<v> variables=<a,b,…>`, optionally
//! followed by `model=<name> parameters=<count>`,
//! followed by CSV rows `sample,station_id,lead_hour,variable,prediction,target`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{ForecastSet, MetricsError, Result};
use crate::Variable;

pub const FORECAST_SCHEMA: &str = "stationcast-forecast v1";
const COLUMNS: [&str; 6] = ["sample", "station_id", "lead_hour", "variable", "prediction", "target"];

pub fn write_forecasts<W: Write>(set: &ForecastSet, out: W) -> Result<()> {
    let mut out = out;
    let names: Vec<&str> = set.variables.iter().map(|v| v.column()).collect();
    let mut header = format!(
        "# {FORECAST_SCHEMA} N={} tau={} V={} variables={}",
        set.num_stations(),
        set.horizon,
        set.num_variables(),
        names.join(",")
    );
    if let Some(model) = &set.model {
        header += &format!(" model={model}");
    }
    if let Some(p) = set.parameters {
        header += &format!(" parameters={p}");
    }
    writeln!(out, "{header}").map_err(|e| MetricsError::io("<forecast>", e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| MetricsError::io("<forecast>", std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(csv_err)?;
    for s in 0..set.samples {
        for (n, id) in set.station_ids.iter().enumerate() {
            for k in 0..set.horizon {
                for (v, var) in set.variables.iter().enumerate() {
                    let i = set.index(s, n, k, v);
                    w.write_record([
                        s.to_string(),
                        id.clone(),
                        (k + 1).to_string(),
                        var.column().to_string(),
                        set.predictions[i].to_string(),
                        set.targets[i].to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| MetricsError::io("<forecast>", e))
}

pub fn write_forecast_file(set: &ForecastSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| MetricsError::io(path, e))?;
    write_forecasts(set, std::io::BufWriter::new(file)).map_err(|e| match e {
        MetricsError::Io { source, .. } => MetricsError::io(path, source),
        other => other,
    })
}

struct Header {
    stations: usize,
    horizon: usize,
    variables: Vec<Variable>,
    model: Option<String>,
    parameters: Option<usize>,
}

fn parse_header(line: &str) -> Result<Header> {
    let mismatch = |m: &str| MetricsError::SchemaMismatch(format!("header: {m}"));
    let rest = line
        .trim_end()
        .strip_prefix("# ")
        .and_then(|l| l.strip_prefix(FORECAST_SCHEMA))
        .ok_or_else(|| mismatch(&format!("expected `# {FORECAST_SCHEMA} …`")))?;
    let (mut n, mut tau, mut v, mut vars) = (None, None, None, None);
    let (mut model, mut parameters) = (None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| mismatch(&format!("bad field `{field}`")))?;
        let count = || {
            value.parse::<usize>().map_err(|_| MetricsError::ValueParse {
                line: 1,
                message: format!("`{key}` is not a count: `{value}`"),
            })
        };
        match key {
            "N" => n = Some(count()?),
            "tau" => tau = Some(count()?),
            "V" => v = Some(count()?),
            "model" => model = Some(value.to_string()),
            "parameters" => parameters = Some(count()?),
            "variables" => {
                vars = Some(
                    value
                        .split(',')
                        .map(|s| {
                            s.parse::<Variable>().map_err(|m| MetricsError::ValueParse { line: 1, message: m })
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            other => return Err(mismatch(&format!("unknown field `{other}`"))),
        }
    }
    let (Some(stations), Some(horizon), Some(v), Some(variables)) = (n, tau, v, vars) else {
        return Err(mismatch("N, tau, V and variables are all required"));
    };
    if variables.len() != v {
        return Err(mismatch(&format!("V={v} but {} variables listed", variables.len())));
    }
    if stations == 0 || horizon == 0 {
        return Err(mismatch("N and tau must be positive"));
    }
    Ok(Header {
        stations,
        horizon,
        variables,
        model,
        parameters,
    })
}

pub fn read_forecasts<R: Read>(input: R) -> Result<ForecastSet> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| MetricsError::io("<forecast>", e))?;
    let header = parse_header(&first)?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let columns = csv.headers().map_err(|e| MetricsError::SchemaMismatch(e.to_string()))?;
    if columns.iter().ne(COLUMNS) {
        return Err(MetricsError::SchemaMismatch(format!(
            "columns {:?}, expected {}",
            columns.iter().collect::<Vec<_>>(),
            COLUMNS.join(",")
        )));
    }

    let (n, tau, nv) = (header.stations, header.horizon, header.variables.len());
    let per_sample = n * tau * nv;
    let mut station_ids: Vec<String> = Vec::new();
    let mut cells: Vec<Option<(f64, f64)>> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| MetricsError::ValueParse {
            line: e.position().map_or(0, |p| p.line() as usize + 1),
            message: e.to_string(),
        })?;
        // +1 for the schema line above the CSV header
        let line = record.position().map_or(0, |p| p.line() as usize + 1);
        let bad = |message: String| MetricsError::ValueParse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let sample: usize = field(0).parse().map_err(|_| bad(format!("bad sample `{}`", field(0))))?;
        let id = field(1);
        let lead: usize = field(2).parse().map_err(|_| bad(format!("bad lead_hour `{}`", field(2))))?;
        let var: Variable = field(3).parse().map_err(bad)?;
        let prediction: f64 = field(4).parse().map_err(|_| bad(format!("bad prediction `{}`", field(4))))?;
        let target: f64 = field(5).parse().map_err(|_| bad(format!("bad target `{}`", field(5))))?;

        let station = match station_ids.iter().position(|s| s == id) {
            Some(i) => i,
            None if station_ids.len() < n => {
                station_ids.push(id.to_string());
                station_ids.len() - 1
            }
            None => {
                return Err(MetricsError::SchemaMismatch(format!(
                    "line {line}: station `{id}` exceeds the declared N={n}"
                )))
            }
        };
        if lead == 0 || lead > tau {
            return Err(MetricsError::SchemaMismatch(format!(
                "line {line}: lead_hour {lead} outside 1..={tau}"
            )));
        }
        let v = header.variables.iter().position(|&x| x == var).ok_or_else(|| {
            MetricsError::SchemaMismatch(format!("line {line}: variable {var} not declared in the header"))
        })?;
        let index = sample * per_sample + (station * tau + lead - 1) * nv + v;
        if index >= cells.len() {
            cells.resize(index + 1, None);
        }
        if cells[index].replace((prediction, target)).is_some() {
            return Err(MetricsError::SchemaMismatch(format!("line {line}: duplicate cell")));
        }
    }
    if station_ids.len() != n {
        return Err(MetricsError::SchemaMismatch(format!(
            "header declares N={n} but the body has {} stations",
            station_ids.len()
        )));
    }
    if cells.is_empty() || !cells.len().is_multiple_of(per_sample) || cells.iter().any(Option::is_none) {
        return Err(MetricsError::SchemaMismatch(format!(
            "body does not fill {n} stations × {tau} leads × {nv} variables for every sample"
        )));
    }
    let (predictions, targets) = cells.into_iter().map(|c| c.expect("checked above")).unzip();
    let mut set = ForecastSet::new(station_ids, tau, header.variables, predictions, targets)?;
    set.model = header.model;
    set.parameters = header.parameters;
    Ok(set)
}

pub fn read_forecast_file(path: &Path) -> Result<ForecastSet> {
    let file = std::fs::File::open(path).map_err(|e| MetricsError::io(path, e))?;
    read_forecasts(file)
}
