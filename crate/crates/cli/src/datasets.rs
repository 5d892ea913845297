//! CSV interchange schemas. Every column name carries its unit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub xi_rad_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub t_s: f64,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub t_s: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "sigma_C")]
    pub sigma_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    #[serde(rename = "nu_Hz")]
    pub nu_hz: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "sigma_S")]
    pub sigma_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingRow {
    #[serde(rename = "B_ac_T")]
    pub b_ac_t: f64,
    #[serde(rename = "X_over_R")]
    pub x_over_r: f64,
    #[serde(rename = "Y_over_R")]
    pub y_over_r: f64,
    pub phi_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Row {
    pub tau_s: f64,
    #[serde(rename = "T2_s")]
    pub t2_s: f64,
    #[serde(rename = "sigma_T2_s")]
    pub sigma_t2_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub tau_s: f64,
    #[serde(rename = "nu_Hz")]
    pub nu_hz: f64,
    #[serde(rename = "Gamma_per_s")]
    pub gamma_per_s: f64,
    #[serde(rename = "sigma_Gamma_per_s")]
    pub sigma_gamma_per_s: f64,
    pub flag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitCurveRow {
    #[serde(rename = "nu_Hz")]
    pub nu_hz: f64,
    #[serde(rename = "S_fit")]
    pub s_fit: f64,
}

/// Recognised CSV layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Trajectory,
    Events,
    Coherence,
    Spectrum,
    Sensing,
    T2Table,
    Rates,
    FitCurve,
}

impl Schema {
    pub const ALL: [Schema; 8] = [
        Schema::Trajectory,
        Schema::Events,
        Schema::Coherence,
        Schema::Spectrum,
        Schema::Sensing,
        Schema::T2Table,
        Schema::Rates,
        Schema::FitCurve,
    ];

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::Trajectory => &["t_s", "xi_rad_per_s"],
            Schema::Events => &["t_s", "i", "j"],
            Schema::Coherence => &["t_s", "C", "sigma_C"],
            Schema::Spectrum => &["nu_Hz", "S", "sigma_S"],
            Schema::Sensing => &["B_ac_T", "X_over_R", "Y_over_R", "phi_rad"],
            Schema::T2Table => &["tau_s", "T2_s", "sigma_T2_s"],
            Schema::Rates => &["tau_s", "nu_Hz", "Gamma_per_s", "sigma_Gamma_per_s", "flag"],
            Schema::FitCurve => &["nu_Hz", "S_fit"],
        }
    }

    pub fn detect(header: &[&str]) -> Option<Schema> {
        Schema::ALL.into_iter().find(|s| s.columns() == header)
    }
}

/// Serializes rows with a header line.
pub fn to_csv<T: Serialize>(rows: &[T], schema: Schema) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(schema.columns()).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Reads the header of a CSV file and classifies it.
pub fn sniff(path: &Path) -> CliResult<Option<Schema>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    Ok(Schema::detect(&header.iter().collect::<Vec<_>>()))
}

/// Reads rows after checking the header against `schema`.
pub fn read_csv<T: DeserializeOwned>(path: &Path, schema: Schema) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != schema.columns() {
        return Err(CliError::data(
            path,
            format!(
                "expected columns {:?}, found {:?}",
                schema.columns(),
                header
            ),
        ));
    }
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::data(path, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_carry_units() {
        let bytes = to_csv(
            &[SpectrumRow {
                nu_hz: 0.5,
                s: 1e-3,
                sigma_s: 1e-4,
            }],
            Schema::Spectrum,
        );
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next(), Some("nu_Hz,S,sigma_S"));
    }

    #[test]
    fn empty_tables_still_have_headers() {
        let bytes = to_csv::<EventRow>(&[], Schema::Events);
        assert_eq!(bytes, b"t_s,i,j\n");
    }

    #[test]
    fn detection_is_exact() {
        assert_eq!(
            Schema::detect(&["t_s", "C", "sigma_C"]),
            Some(Schema::Coherence)
        );
        assert_eq!(Schema::detect(&["t_s", "C"]), None);
    }
}
