use std::fs;
use std::io::{self, Write};
use std::path::Path;

use blocklsi_core::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INVALID_MODEL: u8 = 2;
pub const EXIT_NO_CERTIFICATE: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::Parse(_)
        | Error::Validation(_)
        | Error::DimensionMismatch { .. }
        | Error::BlockIndex { .. }
        | Error::NotPositiveDefinite
        | Error::NotGaussian => EXIT_INVALID_MODEL,
        Error::NoCertificate(_) => EXIT_NO_CERTIFICATE,
        Error::MassDefect { .. } => EXIT_VERIFY_FAILED,
        Error::RhoOutOfRange { .. }
        | Error::InvalidArgument(_)
        | Error::ComponentCap { .. }
        | Error::StepSize { .. } => EXIT_USAGE,
    }
}

pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

pub fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    emit(text.as_bytes(), out)
}

/// One line of the verification table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Row {
    pub check: &'static str,
    pub param: String,
    pub value: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub verdict: &'static str,
}

impl Row {
    pub fn new(check: &'static str, param: String, value: f64, bound: f64, tolerance: f64, pass: bool) -> Self {
        Self { check, param, value, bound, tolerance, verdict: if pass { "pass" } else { "fail" } }
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

pub fn to_csv(rows: &[Row]) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
    if rows.is_empty() {
        w.write_record(["check", "param", "value", "bound", "tolerance", "verdict"]).map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let rows = vec![Row::new("transport", "trial=0;seed=1".into(), 0.0, 0.0, 1e-9, true)];
        let text = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        assert_eq!(text, "check,param,value,bound,tolerance,verdict\ntransport,trial=0;seed=1,0.0,0.0,1e-9,pass\n");
        let empty = String::from_utf8(to_csv(&[]).unwrap()).unwrap();
        assert_eq!(empty, "check,param,value,bound,tolerance,verdict\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NotGaussian), EXIT_INVALID_MODEL);
        assert_eq!(exit_code(&Error::NoCertificate("x".into())), EXIT_NO_CERTIFICATE);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
    }
}
