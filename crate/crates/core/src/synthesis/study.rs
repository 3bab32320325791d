use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::se_from_ci;
use crate::survival::{csv_err, read_rows, write_rows};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "OS")]
    Os,
    #[serde(rename = "PFS")]
    Pfs,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Os => "OS",
            Outcome::Pfs => "PFS",
        })
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OS" => Ok(Outcome::Os),
            "PFS" => Ok(Outcome::Pfs),
            _ => Err(Error::input(format!(
                "unknown outcome `{s}` (expected OS or PFS)"
            ))),
        }
    }
}

/// One study's log hazard ratio for one outcome. A missing `log_hr` marks
/// a value to be predicted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub study: String,
    pub treatment: String,
    pub comparator: String,
    pub outcome: Outcome,
    pub log_hr: Option<f64>,
    pub se: Option<f64>,
}

impl StudyOutcome {
    pub fn new(
        study: &str,
        treatment: &str,
        comparator: &str,
        outcome: Outcome,
        log_hr: f64,
        se: f64,
    ) -> Result<Self> {
        let row = StudyOutcome {
            study: study.into(),
            treatment: treatment.into(),
            comparator: comparator.into(),
            outcome,
            log_hr: Some(log_hr),
            se: Some(se),
        };
        row.validate()?;
        Ok(row)
    }

    /// From a published `HR (lower, upper)` 95% interval.
    pub fn from_hr_ci(
        study: &str,
        treatment: &str,
        comparator: &str,
        outcome: Outcome,
        hr: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if !(hr > 0.0) {
            return Err(Error::input(format!(
                "{study}: hazard ratio must be > 0, got {hr}"
            )));
        }
        Self::new(
            study,
            treatment,
            comparator,
            outcome,
            hr.ln(),
            se_from_ci(lower, upper)?,
        )
    }

    /// A value to be predicted.
    pub fn missing(study: &str, treatment: &str, comparator: &str, outcome: Outcome) -> Self {
        StudyOutcome {
            study: study.into(),
            treatment: treatment.into(),
            comparator: comparator.into(),
            outcome,
            log_hr: None,
            se: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.treatment == self.comparator {
            return Err(Error::input(format!(
                "{}: treatment equals comparator",
                self.study
            )));
        }
        match (self.log_hr, self.se) {
            (Some(y), Some(se)) if y.is_finite() && se > 0.0 && se.is_finite() => Ok(()),
            (None, _) => match self.se {
                Some(se) if !(se > 0.0) => {
                    Err(Error::input(format!("{}: se must be > 0", self.study)))
                }
                _ => Ok(()),
            },
            (Some(_), None) => Err(Error::input(format!(
                "{} {}: log HR given without a standard error",
                self.study, self.outcome
            ))),
            _ => Err(Error::input(format!(
                "{} {}: log HR must be finite and se > 0",
                self.study, self.outcome
            ))),
        }
    }

    /// Observed `(log_hr, se)` if both are present.
    pub fn observed(&self) -> Option<(f64, f64)> {
        self.log_hr.zip(self.se)
    }

    pub fn same_contrast(&self, other: &StudyOutcome) -> bool {
        self.treatment == other.treatment && self.comparator == other.comparator
    }
}

#[derive(Serialize, Deserialize)]
struct StudyRow {
    study: String,
    treatment: String,
    comparator: String,
    outcome: String,
    log_hr: Option<f64>,
    se: Option<f64>,
}

/// Read `study,treatment,comparator,outcome,log_hr,se`; empty `log_hr` /
/// `se` fields mark missing values.
pub fn read_studies(path: &Path) -> Result<Vec<StudyOutcome>> {
    let rows: Vec<StudyRow> = read_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let outcome = r
                .outcome
                .parse()
                .map_err(|e| csv_err(path, format!("row {}: {e}", i + 1)))?;
            let row = StudyOutcome {
                study: r.study,
                treatment: r.treatment,
                comparator: r.comparator,
                outcome,
                log_hr: r.log_hr,
                se: r.se,
            };
            row.validate()
                .map_err(|e| csv_err(path, format!("row {}: {e}", i + 1)))?;
            Ok(row)
        })
        .collect()
}

pub fn write_studies(path: &Path, rows: &[StudyOutcome]) -> Result<()> {
    let out: Vec<StudyRow> = rows
        .iter()
        .map(|r| StudyRow {
            study: r.study.clone(),
            treatment: r.treatment.clone(),
            comparator: r.comparator.clone(),
            outcome: r.outcome.to_string(),
            log_hr: r.log_hr,
            se: r.se,
        })
        .collect();
    write_rows(path, &out)
}
