use std::path::Path;

use serde::{Deserialize, Serialize};

use super::km::{IpdRecord, KmCurve};
use crate::error::{Error, Result};

pub(crate) fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub(crate) fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    rdr.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct IpdRow {
    time: f64,
    event: u8,
    arm: String,
}

#[derive(Serialize, Deserialize)]
struct StepRow {
    time: f64,
    survival: f64,
}

#[derive(Serialize, Deserialize)]
struct RiskRow {
    interval_start: f64,
    n_at_risk: usize,
}

/// Read `time,event,arm`.
pub fn read_ipd(path: &Path) -> Result<Vec<IpdRecord>> {
    let rows: Vec<IpdRow> = read_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.event > 1 {
                return Err(csv_err(
                    path,
                    format!("row {}: event must be 0 or 1", i + 1),
                ));
            }
            if !(r.time > 0.0 && r.time.is_finite()) {
                return Err(csv_err(
                    path,
                    format!("row {}: time must be finite and > 0", i + 1),
                ));
            }
            Ok(IpdRecord::new(r.time, r.event == 1, r.arm))
        })
        .collect()
}

pub fn write_ipd(path: &Path, data: &[IpdRecord]) -> Result<()> {
    let rows: Vec<IpdRow> = data
        .iter()
        .map(|r| IpdRow {
            time: r.time,
            event: r.event as u8,
            arm: r.arm.clone(),
        })
        .collect();
    write_rows(path, &rows)
}

/// Read a digitised curve (`time,survival`) and its risk table
/// (`interval_start,n_at_risk`). The coordinates are cleaned with
/// [`KmCurve::from_digitized`].
pub fn read_km_curve(steps: &Path, risk: &Path) -> Result<KmCurve> {
    let s: Vec<StepRow> = read_rows(steps)?;
    let r: Vec<RiskRow> = read_rows(risk)?;
    KmCurve::from_digitized(
        &s.iter().map(|p| (p.time, p.survival)).collect::<Vec<_>>(),
        r.iter().map(|p| (p.interval_start, p.n_at_risk)).collect(),
    )
}

pub fn write_km_curve(steps: &Path, risk: &Path, curve: &KmCurve) -> Result<()> {
    let s: Vec<StepRow> = std::iter::once(StepRow {
        time: 0.0,
        survival: 1.0,
    })
    .chain(
        curve
            .steps
            .iter()
            .map(|&(time, survival)| StepRow { time, survival }),
    )
    .collect();
    let r: Vec<RiskRow> = curve
        .risk_table
        .iter()
        .map(|&(interval_start, n_at_risk)| RiskRow {
            interval_start,
            n_at_risk,
        })
        .collect();
    write_rows(steps, &s)?;
    write_rows(risk, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let curve =
            KmCurve::new(vec![(1.5, 0.9), (4.0, 0.55)], vec![(0.0, 20), (3.0, 15)]).unwrap();
        let (s, r) = (dir.path().join("s.csv"), dir.path().join("r.csv"));
        write_km_curve(&s, &r, &curve).unwrap();
        assert_eq!(read_km_curve(&s, &r).unwrap(), curve);
    }

    #[test]
    fn ipd_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ipd.csv");
        let data = vec![
            IpdRecord::new(2.5, true, "M+P"),
            IpdRecord::new(7.0, false, "P"),
        ];
        write_ipd(&p, &data).unwrap();
        assert_eq!(read_ipd(&p).unwrap(), data);
        std::fs::write(&p, "time,event,arm\n1.0,2,A\n").unwrap();
        assert!(read_ipd(&p).is_err());
        assert!(matches!(
            read_ipd(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
