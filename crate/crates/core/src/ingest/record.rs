use chrono::{DateTime, Utc};

use super::{IngestError, QualityPolicy, VariableCodec};
use crate::time::{format_utc, parse_utc};
use crate::Variable;

/// One decoded sensor reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawObservation {
    pub timestamp: DateTime<Utc>,
    pub variable: Variable,
    /// Physical units; NaN when `is_missing`.
    pub value: f64,
    pub quality: u8,
    pub is_missing: bool,
}

/// Parse one record line: timestamp followed by one `value,quality` pair per codec.
pub fn parse_record_line(
    line: &str,
    schema: &[VariableCodec],
    policy: &QualityPolicy,
) -> Result<(DateTime<Utc>, Vec<RawObservation>), IngestError> {
    if let Some(pos) = line.bytes().position(|b| !b.is_ascii()) {
        let field_index = field_index_at(line, pos);
        return Err(IngestError::malformed(field_index, pos, "non-ASCII byte"));
    }
    let (ts_token, rest) = match line.find(',') {
        Some(i) => (&line[..i], Some(i + 1)),
        None => (line, None),
    };
    let timestamp = parse_utc(ts_token).ok_or_else(|| IngestError::BadTimestamp(ts_token.to_string()))?;

    // byte offsets of each comma-separated token after the timestamp
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    if let Some(mut start) = rest {
        for piece in line[start..].split(',') {
            tokens.push((start, piece));
            start += piece.len() + 1;
        }
    }

    let mut observations = Vec::with_capacity(schema.len());
    for (index, codec) in schema.iter().enumerate() {
        let (Some(&(offset, value_tok)), Some(&(_, quality_tok))) = (tokens.get(2 * index), tokens.get(2 * index + 1))
        else {
            return Err(IngestError::malformed(
                Some(index),
                line.len(),
                format!("record has {} fields, schema expects {}", tokens.len() / 2, schema.len()),
            ));
        };
        let field = format!("{value_tok},{quality_tok}");
        let decoded = codec.decode(&field, policy).map_err(|e| match e {
            IngestError::MalformedField { offset: inner, reason, .. } => IngestError::MalformedField {
                field_index: Some(index),
                offset: offset + inner,
                reason,
            },
            other => other,
        })?;
        observations.push(RawObservation {
            timestamp,
            variable: codec.variable,
            value: decoded.value,
            quality: decoded.quality,
            is_missing: decoded.is_missing,
        });
    }
    if tokens.len() > 2 * schema.len() {
        return Err(IngestError::malformed(
            Some(schema.len()),
            tokens[2 * schema.len()].0,
            "trailing fields beyond schema",
        ));
    }
    Ok((timestamp, observations))
}

fn field_index_at(line: &str, pos: usize) -> Option<usize> {
    let commas = line.as_bytes()[..pos].iter().filter(|&&b| b == b',').count();
    // token 0 is the timestamp, then two tokens per field
    (commas > 0).then(|| (commas - 1) / 2)
}

/// Encode one record line. `None` values are written as the codec's sentinel.
pub fn format_record_line(
    timestamp: DateTime<Utc>,
    schema: &[VariableCodec],
    values: &[(Option<f64>, u8)],
) -> Option<String> {
    if values.len() != schema.len() {
        return None;
    }
    let mut line = format_utc(timestamp);
    for (codec, &(value, quality)) in schema.iter().zip(values) {
        line.push(',');
        line.push_str(&codec.encode(value, quality)?);
    }
    Some(line)
}
