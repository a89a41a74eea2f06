use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One attack line: flipped samples split by the detector's verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: String,
    pub detected: usize,
    pub successful: usize,
    pub total: usize,
}

/// Clean test data under the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub trusted: usize,
    pub wrongly_rejected: usize,
    pub total: usize,
    pub accuracy_trusted: f64,
    pub accuracy_all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub attacks: Vec<AttackRow>,
    pub test: TestRow,
}

impl DetectionReport {
    pub fn validate(&self) -> Result<()> {
        for row in &self.attacks {
            if row.detected + row.successful != row.total {
                return Err(Error::ShapeMismatch(format!(
                    "{}: detected {} + successful {} != total {}",
                    row.attack, row.detected, row.successful, row.total
                )));
            }
        }
        if self.test.trusted + self.test.wrongly_rejected != self.test.total {
            return Err(Error::ShapeMismatch("test rows do not add up".into()));
        }
        Ok(())
    }
}

/// Renders the report as CSV: one row per attack, then the clean test-data
/// row and the accuracy row (trusted subset, whole set).
pub fn write_report(report: &DetectionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attack", "detected", "successful", "total"])?;
    for row in &report.attacks {
        w.write_record([
            row.attack.clone(),
            row.detected.to_string(),
            row.successful.to_string(),
            row.total.to_string(),
        ])?;
    }
    let t = &report.test;
    w.write_record([
        "Test data".to_string(),
        t.trusted.to_string(),
        t.wrongly_rejected.to_string(),
        t.total.to_string(),
    ])?;
    w.write_record([
        "Accuracy".to_string(),
        format!("{:.5}", t.accuracy_trusted),
        String::new(),
        format!("{:.5}", t.accuracy_all),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report_json(report: &DetectionReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_row() -> TestRow {
        TestRow {
            trusted: 9801,
            wrongly_rejected: 199,
            total: 10000,
            accuracy_trusted: 0.78349,
            accuracy_all: 0.7887,
        }
    }

    #[test]
    fn table_style_rows() {
        let report = DetectionReport {
            attacks: vec![AttackRow {
                attack: "FGSM".into(),
                detected: 4973,
                successful: 0,
                total: 4973,
            }],
            test: test_row(),
        };
        report.validate().unwrap();
        let csv = write_report(&report).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "attack,detected,successful,total");
        assert_eq!(lines[1], "FGSM,4973,0,4973");
        assert_eq!(lines[2], "Test data,9801,199,10000");
        assert_eq!(lines[3], "Accuracy,0.78349,,0.78870");
    }

    #[test]
    fn empty_attack_list() {
        let report = DetectionReport {
            attacks: vec![],
            test: test_row(),
        };
        let csv = write_report(&report).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let json: DetectionReport = serde_json::from_str(&write_report_json(&report).unwrap()).unwrap();
        assert_eq!(json, report);
    }

    #[test]
    fn inconsistent_rows_fail_validation() {
        let report = DetectionReport {
            attacks: vec![AttackRow {
                attack: "PGD".into(),
                detected: 3,
                successful: 1,
                total: 5,
            }],
            test: test_row(),
        };
        assert!(report.validate().is_err());
    }
}
