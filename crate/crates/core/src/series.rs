use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Theory,
    Empirical,
    Mc,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Theory => "theory",
            Provenance::Empirical => "empirical",
            Provenance::Mc => "mc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// Values constrained to `[0, 1]`.
    ErrorRate,
    /// Non-negative values (losses, entropies).
    Loss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub value: f64,
    pub se: Option<f64>,
}

/// `(P, value)` points with provenance and error bars.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub provenance: Provenance,
    pub kind: ValueKind,
    pub points: Vec<CurvePoint>,
}

impl CurveSeries {
    pub fn new(
        label: String,
        provenance: Provenance,
        kind: ValueKind,
        points: Vec<CurvePoint>,
    ) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for pt in &points {
            if pt.p <= prev {
                return Err(RhmError::InvalidParameter(
                    "curve grid must be strictly increasing in P".into(),
                ));
            }
            prev = pt.p;
            let ok = match kind {
                ValueKind::ErrorRate => (0.0..=1.0 + 1e-9).contains(&pt.value),
                ValueKind::Loss => pt.value >= -1e-9,
            };
            if !ok {
                return Err(RhmError::InvalidParameter(format!(
                    "value {} out of range for {kind:?}",
                    pt.value
                )));
            }
        }
        Ok(Self { label, provenance, kind, points })
    }
}

/// `P,value,se,provenance,label` rows; several series may share one file so
/// plots can overlay theory and measurement.
pub fn write_curves_csv(series: &[CurveSeries], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P,value,se,provenance,label")?;
    for s in series {
        for pt in &s.points {
            let se = pt.se.map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", pt.p, pt.value, se, s.provenance.as_str(), s.label)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One cross-entropy ladder row per level: `ell,L_ell,residual,a`.
pub fn write_ladder_csv(
    rows: &[(usize, f64, f64, String)],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ell,L_ell,residual,a")?;
    for (ell, value, residual, a) in rows {
        writeln!(w, "{ell},{value},{residual},{a}")?;
    }
    w.flush()?;
    Ok(())
}

/// Structured result record for Monte Carlo quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McRecord {
    pub quantity: String,
    pub params: crate::params::RhmParams,
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

pub fn write_records_jsonl(records: &[McRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_must_increase() {
        let pts = vec![
            CurvePoint { p: 10.0, value: 0.5, se: None },
            CurvePoint { p: 10.0, value: 0.4, se: None },
        ];
        assert!(CurveSeries::new("x".into(), Provenance::Theory, ValueKind::ErrorRate, pts).is_err());
    }

    #[test]
    fn error_rates_bounded() {
        let pts = vec![CurvePoint { p: 1.0, value: 1.5, se: None }];
        assert!(CurveSeries::new("x".into(), Provenance::Theory, ValueKind::ErrorRate, pts).is_err());
        let pts = vec![CurvePoint { p: 1.0, value: 1.5, se: None }];
        assert!(CurveSeries::new("x".into(), Provenance::Mc, ValueKind::Loss, pts).is_ok());
    }

    #[test]
    fn csv_bodies_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let series = vec![CurveSeries::new(
            "demo".into(),
            Provenance::Theory,
            ValueKind::Loss,
            vec![CurvePoint { p: 1.0, value: 0.25, se: Some(0.01) }],
        )
        .unwrap()];
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_curves_csv(&series, &p1).unwrap();
        write_curves_csv(&series, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
