//! JSON Lines dataset files.
//!
//! The first line is a header carrying the generating config:
//!
//! ```text
//! {"format":"geodp-dataset","version":1,"config":{...}}
//! {"row":0,"col":3,"type":"categorical","value":2,"params":{"k":5}}
//! {"row":0,"col":3,"type":"boolean","value":1,"params":{}}
//! {"row":0,"col":3,"type":"rank","value":4,"params":{"m":5}}
//! {"row":0,"col":3,"type":"float","value":61234.5,"params":{"lo":20000.0,"hi":200000.0}}
//! ```
//!
//! Floats use shortest round-trip formatting, so read-after-write is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Dataset, ScenarioConfig};
use crate::error::{Error, Result};
use crate::grid::CellId;
use crate::model::{Record, Value};

const FORMAT: &str = "geodp-dataset";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ScenarioConfig,
}

#[derive(Deserialize)]
struct Line {
    row: usize,
    col: usize,
    #[serde(rename = "type")]
    kind: String,
    value: serde_json::Value,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
}

fn record_json(r: &Record) -> serde_json::Value {
    let CellId { row, col } = r.cell();
    match *r.value() {
        Value::Categorical { index, k } => {
            json!({"row": row, "col": col, "type": "categorical", "value": index, "params": {"k": k}})
        }
        Value::Boolean(b) => {
            json!({"row": row, "col": col, "type": "boolean", "value": u8::from(b), "params": {}})
        }
        Value::Rank { rank, levels } => {
            json!({"row": row, "col": col, "type": "rank", "value": rank, "params": {"m": levels}})
        }
        Value::Float { value, lo, hi } => {
            json!({"row": row, "col": col, "type": "float", "value": value, "params": {"lo": lo, "hi": hi}})
        }
    }
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        config: ds.config.clone(),
    };
    let io = |e: serde_json::Error| Error::Io(e.to_string());
    serde_json::to_writer(&mut out, &header).map_err(io)?;
    out.write_all(b"\n")?;
    for r in &ds.records {
        serde_json::to_writer(&mut out, &record_json(r)).map_err(io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset_file(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, BufWriter::new(File::create(path)?))
}

fn parse_record(line: &str) -> std::result::Result<Record, String> {
    let l: Line = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let cell = CellId::new(l.row, l.col);
    let uint = |v: &serde_json::Value, name: &str| {
        v.as_u64()
            .and_then(|x| u32::try_from(x).ok())
            .ok_or_else(|| format!("{name} must be a non-negative integer"))
    };
    let float = |v: Option<&serde_json::Value>, name: &str| {
        v.and_then(serde_json::Value::as_f64)
            .ok_or_else(|| format!("{name} must be a number"))
    };
    let param = |name: &str| l.params.get(name).ok_or_else(|| format!("missing param {name}"));
    let value = match l.kind.as_str() {
        "categorical" => Value::Categorical {
            index: uint(&l.value, "value")?,
            k: uint(param("k")?, "k")?,
        },
        "boolean" => match l.value.as_u64() {
            Some(0) => Value::Boolean(false),
            Some(1) => Value::Boolean(true),
            _ => return Err("boolean value must be 0 or 1".into()),
        },
        "rank" => Value::Rank {
            rank: uint(&l.value, "value")?,
            levels: uint(param("m")?, "m")?,
        },
        "float" => Value::Float {
            value: float(Some(&l.value), "value")?,
            lo: float(l.params.get("lo"), "lo")?,
            hi: float(l.params.get("hi"), "hi")?,
        },
        other => return Err(format!("unknown record type '{other}'")),
    };
    Record::new(cell, value).map_err(|e| e.to_string())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })??;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let config = header.config;
    config.validate()?;

    let mut records = Vec::with_capacity(config.record_count());
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let r = parse_record(&line).map_err(|message| Error::Parse { line: lineno, message })?;
        if !config.grid.contains_cell(r.cell()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("cell ({}, {}) outside grid", r.cell().row, r.cell().col),
            });
        }
        if r.value().scenario() != config.scenario {
            return Err(Error::Parse {
                line: lineno,
                message: format!("record type does not match scenario {}", config.scenario),
            });
        }
        records.push(r);
    }
    Ok(Dataset { config, records })
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::ScenarioKind;
    use crate::synthgen::generate;
    use proptest::prelude::*;

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn every_scenario_round_trips_bit_exact() {
        for s in ScenarioKind::ALL {
            let cfg = ScenarioConfig::new(s, GridSpec::pittsburgh(3, 2).unwrap(), 7, 5);
            let ds = generate(&cfg).unwrap();
            let buf = bytes(&ds);
            let back = read_dataset(&buf[..]).unwrap();
            assert_eq!(back, ds);
            assert_eq!(bytes(&back), buf);
        }
    }

    #[test]
    fn line_format() {
        let cfg = ScenarioConfig::new(ScenarioKind::Boolean, GridSpec::pittsburgh(1, 1).unwrap(), 1, 5);
        let ds = generate(&cfg).unwrap();
        let text = String::from_utf8(bytes(&ds)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(r#"{"format":"geodp-dataset","version":1"#));
        assert!(lines[1].contains(r#""type":"boolean""#));
        assert!(lines[1].contains(r#""params":{}"#));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_dataset(&b""[..]).is_err());
        let cfg = ScenarioConfig::new(ScenarioKind::Ranking, GridSpec::pittsburgh(2, 2).unwrap(), 1, 5);
        let ds = generate(&cfg).unwrap();
        let mut text = String::from_utf8(bytes(&ds)).unwrap();
        text.push_str(r#"{"row":9,"col":0,"type":"rank","value":1,"params":{"m":5}}"#);
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 6, .. })));

        let mut text = String::from_utf8(bytes(&ds)).unwrap();
        text.push_str(r#"{"row":0,"col":0,"type":"rank","value":7,"params":{"m":5}}"#);
        assert!(read_dataset(text.as_bytes()).is_err());

        let mut text = String::from_utf8(bytes(&ds)).unwrap();
        text.push_str(r#"{"row":0,"col":0,"type":"boolean","value":1,"params":{}}"#);
        assert!(read_dataset(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn float_values_round_trip(vals in proptest::collection::vec(-1e9f64..1e9, 1..20)) {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
            let mut cfg = ScenarioConfig::new(ScenarioKind::Income, GridSpec::pittsburgh(1, 1).unwrap(), 1, 0);
            cfg.income_lo = lo;
            cfg.income_hi = hi;
            let records = vals.iter().map(|&v| Record::float(CellId::new(0, 0), v, lo, hi).unwrap()).collect();
            let ds = Dataset { config: cfg, records };
            let back = read_dataset(&bytes(&ds)[..]).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
