use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::SweepResult;

pub const CSV_HEADER: &str = "snr_db,trials,frame_errors,symbol_errors,fer,ser";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One header line and one row per SNR point, every line `\n`-terminated.
/// Floats use Rust's shortest round-trip formatting.
pub fn write_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &result.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.snr_db, p.trials, p.frame_errors, p.symbol_errors, p.fer, p.ser
        );
    }
    out
}

pub fn emit_results(result: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    let body = match format {
        OutputFormat::Csv => write_csv(result),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(result).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
            s.push('\n');
            s
        }
    };
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_json(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentSpec, SnrPoint};

    fn result(points: Vec<SnrPoint>) -> SweepResult {
        SweepResult {
            config: ExperimentSpec::default(),
            master_seed: 9,
            points,
            slope: None,
            roundtrip: None,
        }
    }

    #[test]
    fn empty_sweep_is_header_only() {
        assert_eq!(write_csv(&result(vec![])), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_point_csv() {
        let r = result(vec![SnrPoint {
            snr_db: 12.5,
            trials: 1000,
            frame_errors: 13,
            symbol_errors: 20,
            fer: 0.013,
            ser: 0.005,
        }]);
        let csv = write_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec![CSV_HEADER, "12.5,1000,13,20,0.013,0.005"]);
        let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields, vec![12.5, 1000.0, 13.0, 20.0, 0.013, 0.005]);
    }

    #[test]
    fn io_error_carries_path() {
        let err = emit_results(
            &result(vec![]),
            OutputFormat::Csv,
            Path::new("/nonexistent-dir/out.csv"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }
}
