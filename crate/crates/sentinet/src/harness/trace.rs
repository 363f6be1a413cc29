//! CSV trace persistence. Floats are written with Rust's shortest
//! round-trip formatting so replaying a trace reproduces values exactly.

use std::path::Path;

use crate::chidetect::Verdict;

use super::HarnessError;

/// Rows of (step, sensor, value); also used for (step, state, value).
pub fn write_scalar_trace(
    path: &Path,
    id_header: &str,
    rows: impl Iterator<Item = (usize, usize, f64)>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", id_header, "value"])?;
    for (step, id, value) in rows {
        w.write_record([step.to_string(), id.to_string(), value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of (step, sensor, state, value) for vector-valued estimate traces.
pub fn write_vector_trace(
    path: &Path,
    rows: impl Iterator<Item = (usize, usize, usize, f64)>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "sensor", "state", "value"])?;
    for (step, sensor, state, value) in rows {
        w.write_record([
            step.to_string(),
            sensor.to_string(),
            state.to_string(),
            value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct ScalarRecord {
    pub step: usize,
    pub id: usize,
    pub value: f64,
}

pub fn read_scalar_trace(path: &Path) -> Result<Vec<ScalarRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(ScalarRecord {
            step: rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::TraceSchema(path.display().to_string()))?,
            id: rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::TraceSchema(path.display().to_string()))?,
            value: rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::TraceSchema(path.display().to_string()))?,
        });
    }
    Ok(out)
}

/// Verdict rows: step, sensor, z, v, then one {0,1} column per threshold.
/// Warm-up steps are absent by construction.
pub fn write_verdict_trace(
    path: &Path,
    fars: &[f64],
    rows: impl Iterator<Item = (f64, Verdict)>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "sensor".to_string(), "z".to_string(), "v".to_string()];
    for p in fars {
        header.push(format!("h1_p{p}"));
    }
    w.write_record(&header)?;
    for (z, v) in rows {
        let mut rec = vec![
            v.step.to_string(),
            v.sensor.to_string(),
            z.to_string(),
            v.v.to_string(),
        ];
        for d in &v.decisions {
            rec.push(if d.attack { "1" } else { "0" }.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
