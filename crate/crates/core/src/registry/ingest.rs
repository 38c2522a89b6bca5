//! CSV and JSON-Lines catalog readers and writers.
//!
//! CSV: UTF-8, header `id,type,lat,lon,<prop>...`, empty cell = missing value.
//! JSON-Lines: one `{"id","type","lat","lon","values":{...}}` object per line.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PropertySchema, RegistryError, RegistrySnapshot, SensorDocument, SensorRecord};
use crate::geo::GeoPoint;

const META_COLUMNS: [&str; 4] = ["id", "type", "lat", "lon"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogFormat {
    Csv,
    #[serde(alias = "jsonlines")]
    Jsonl,
}

impl FromStr for CatalogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CatalogFormat::Csv),
            "jsonl" | "jsonlines" | "ndjson" => Ok(CatalogFormat::Jsonl),
            other => Err(format!("unknown catalog format {other:?} (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for CatalogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CatalogFormat::Csv => "csv",
            CatalogFormat::Jsonl => "jsonl",
        })
    }
}

/// Parses every record of a catalog. Any error rejects the whole input.
/// Duplicate ids are detected when the records are assembled into a snapshot.
pub fn parse_catalog<R: Read>(
    source: R,
    format: CatalogFormat,
    schema: &PropertySchema,
) -> Result<Vec<SensorRecord>, RegistryError> {
    let records = match format {
        CatalogFormat::Csv => parse_csv(source, schema)?,
        CatalogFormat::Jsonl => parse_jsonl(source, schema)?,
    };
    let mut seen = std::collections::HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(RegistryError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

fn malformed(line: u64, reason: impl Into<String>) -> RegistryError {
    RegistryError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_number(cell: &str, line: u64, column: &str) -> Result<f64, RegistryError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| malformed(line, format!("column {column}: {cell:?} is not a number")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("column {column}: non-finite value {cell:?}")));
    }
    Ok(v)
}

fn location(lat: f64, lon: f64, line: u64) -> Result<GeoPoint, RegistryError> {
    let p = GeoPoint::new(lat, lon);
    if !p.is_valid() {
        return Err(malformed(line, format!("location ({lat}, {lon}) out of range")));
    }
    Ok(p)
}

fn parse_csv<R: Read>(source: R, schema: &PropertySchema) -> Result<Vec<SensorRecord>, RegistryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.len() < META_COLUMNS.len()
        || header.iter().zip(META_COLUMNS).any(|(h, m)| h != m)
    {
        return Err(malformed(1, "header must start with id,type,lat,lon"));
    }
    let mut columns = Vec::with_capacity(header.len() - META_COLUMNS.len());
    for name in header.iter().skip(META_COLUMNS.len()) {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| RegistryError::UnknownProperty(name.to_string()))?;
        if columns.contains(&idx) {
            return Err(malformed(1, format!("duplicate column {name:?}")));
        }
        columns.push(idx);
    }

    let mut sensors = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut values = vec![None; schema.len()];
    loop {
        let line_hint = reader.position().line();
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e, line_hint)),
        }
        let line = row.position().map_or(line_hint, |p| p.line());
        let id = &row[0];
        if id.is_empty() {
            return Err(malformed(line, "empty id"));
        }
        let lat = parse_number(&row[2], line, "lat")?;
        let lon = parse_number(&row[3], line, "lon")?;
        values.iter_mut().for_each(|v| *v = None);
        for (cell, &idx) in row.iter().skip(META_COLUMNS.len()).zip(&columns) {
            if !cell.is_empty() {
                values[idx] = Some(parse_number(cell, line, &schema.properties()[idx].name)?);
            }
        }
        let record = SensorRecord::new(id, &row[1], location(lat, lon, line)?, &values)
            .map_err(|e| malformed(line, e.to_string()))?;
        sensors.push(record);
    }
    Ok(sensors)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> RegistryError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RegistryError::Io(io),
        kind => malformed(line, format!("{kind:?}")),
    }
}

fn parse_jsonl<R: Read>(source: R, schema: &PropertySchema) -> Result<Vec<SensorRecord>, RegistryError> {
    let reader = BufReader::new(source);
    let mut sensors = Vec::new();
    let mut values = vec![None; schema.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let doc: SensorDocument =
            serde_json::from_str(text).map_err(|e| malformed(line_no, e.to_string()))?;
        if doc.id.is_empty() {
            return Err(malformed(line_no, "empty id"));
        }
        values.iter_mut().for_each(|v| *v = None);
        for (name, v) in &doc.values {
            let idx = schema
                .index_of(name)
                .ok_or_else(|| RegistryError::UnknownProperty(name.clone()))?;
            values[idx] = *v;
        }
        let record = SensorRecord::new(doc.id, doc.sensor_type, location(doc.lat, doc.lon, line_no)?, &values)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        sensors.push(record);
    }
    Ok(sensors)
}

/// Writes the snapshot as CSV. Values use the shortest decimal form that
/// parses back to the identical `f64`.
pub fn write_csv<W: Write>(snapshot: &RegistrySnapshot, sink: W) -> Result<(), RegistryError> {
    let mut writer = csv::Writer::from_writer(sink);
    let schema = snapshot.schema();
    let header: Vec<&str> = META_COLUMNS.iter().copied().chain(schema.names()).collect();
    writer.write_record(&header).map_err(csv_write_error)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in snapshot.sensors() {
        row.clear();
        row.push(s.id.clone());
        row.push(s.sensor_type.clone());
        row.push(s.location.lat.to_string());
        row.push(s.location.lon.to_string());
        row.extend((0..schema.len()).map(|i| s.value(i).map(|v| v.to_string()).unwrap_or_default()));
        writer.write_record(&row).map_err(csv_write_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> RegistryError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RegistryError::Io(io),
        kind => RegistryError::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

pub fn write_jsonl<W: Write>(snapshot: &RegistrySnapshot, mut sink: W) -> Result<(), RegistryError> {
    for s in snapshot.sensors() {
        serde_json::to_writer(&mut sink, &s.to_document(snapshot.schema()))
            .map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{load_catalog, Bounds, Polarity, PropertyDef};

    fn schema() -> PropertySchema {
        PropertySchema::new(vec![
            PropertyDef::new("accuracy", Polarity::HigherIsBetter, Some(Bounds::UNIT)),
            PropertyDef::new("cost", Polarity::LowerIsBetter, None),
        ])
        .unwrap()
    }

    fn load(text: &str, format: CatalogFormat) -> Result<RegistrySnapshot, RegistryError> {
        load_catalog(text.as_bytes(), format, schema())
    }

    #[test]
    fn single_row_csv() {
        let snap = load("id,type,lat,lon,accuracy\ns1,temperature,-35.28,149.13,0.9\n", CatalogFormat::Csv).unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.version(), 1);
        let s = snap.get("s1").unwrap();
        assert_eq!(s.sensor_type, "temperature");
        assert_eq!(s.location, GeoPoint::new(-35.28, 149.13));
        assert_eq!(s.named_values(snap.schema()).into_iter().collect::<Vec<_>>(), [("accuracy".to_string(), 0.9)]);
    }

    #[test]
    fn header_only_csv_is_empty_snapshot() {
        let snap = load("id,type,lat,lon,accuracy\n", CatalogFormat::Csv).unwrap();
        assert!(snap.is_empty());
    }

    #[test]
    fn duplicate_id() {
        let text = "id,type,lat,lon,accuracy\ns1,t,0,0,0.1\ns1,t,0,0,0.2\n";
        assert!(matches!(load(text, CatalogFormat::Csv), Err(RegistryError::DuplicateId(id)) if id == "s1"));
    }

    #[test]
    fn unknown_column() {
        let text = "id,type,lat,lon,energy\n";
        assert!(matches!(load(text, CatalogFormat::Csv), Err(RegistryError::UnknownProperty(p)) if p == "energy"));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "id,type,lat,lon,accuracy\ns1,t,0,0,0.1\ns2,t,zero,0,0.2\n";
        assert!(matches!(load(text, CatalogFormat::Csv), Err(RegistryError::MalformedRow { line: 3, .. })));
        let short = "id,type,lat,lon,accuracy\ns1,t,0,0\n";
        assert!(matches!(load(short, CatalogFormat::Csv), Err(RegistryError::MalformedRow { line: 2, .. })));
        let bad_lat = "id,type,lat,lon\ns1,t,95,0\n";
        assert!(matches!(load(bad_lat, CatalogFormat::Csv), Err(RegistryError::MalformedRow { line: 2, .. })));
        let nan = "id,type,lat,lon,cost\ns1,t,0,0,NaN\n";
        assert!(matches!(load(nan, CatalogFormat::Csv), Err(RegistryError::MalformedRow { line: 2, .. })));
        let bad_header = "type,id,lat,lon\n";
        assert!(matches!(load(bad_header, CatalogFormat::Csv), Err(RegistryError::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn empty_cells_and_crlf() {
        let text = "id,type,lat,lon,accuracy,cost\r\ns1,t,1,2,,5\r\ns2,t,1,2,0.5,\r\n";
        let snap = load(text, CatalogFormat::Csv).unwrap();
        assert_eq!(snap.get("s1").unwrap().value(0), None);
        assert_eq!(snap.get("s1").unwrap().value(1), Some(5.0));
        assert_eq!(snap.get("s2").unwrap().value(1), None);
    }

    #[test]
    fn jsonl_records() {
        let text = r#"{"id":"a","type":"temperature","lat":1.0,"lon":2.0,"values":{"accuracy":0.5,"cost":null}}

{"id":"b","type":"pressure","lat":-1.0,"lon":-2.0,"values":{}}
"#;
        let snap = load(text, CatalogFormat::Jsonl).unwrap();
        assert_eq!(snap.len(), 2);
        assert_eq!(snap.get("a").unwrap().value(0), Some(0.5));
        assert_eq!(snap.get("a").unwrap().value(1), None);
    }

    #[test]
    fn jsonl_errors() {
        let unknown = r#"{"id":"a","type":"t","lat":0,"lon":0,"values":{"energy":1}}"#;
        assert!(matches!(load(unknown, CatalogFormat::Jsonl), Err(RegistryError::UnknownProperty(_))));
        let broken = "{\"id\":\"a\",\"type\":\"t\",\"lat\":0,\"lon\":0}\n{oops";
        assert!(matches!(load(broken, CatalogFormat::Jsonl), Err(RegistryError::MalformedRow { line: 2, .. })));
        let dup = "{\"id\":\"a\",\"type\":\"t\",\"lat\":0,\"lon\":0}\n{\"id\":\"a\",\"type\":\"t\",\"lat\":0,\"lon\":0}";
        assert!(matches!(load(dup, CatalogFormat::Jsonl), Err(RegistryError::DuplicateId(_))));
    }

    #[test]
    fn format_names() {
        assert_eq!("CSV".parse::<CatalogFormat>().unwrap(), CatalogFormat::Csv);
        assert_eq!("jsonl".parse::<CatalogFormat>().unwrap(), CatalogFormat::Jsonl);
        assert!("xml".parse::<CatalogFormat>().is_err());
    }
}
