//! JSON-lines reports with 17-significant-digit floats.
//!
//! Every line is an object with a `record` field naming its kind. The keys
//! of each kind are fixed:
//!
//! | record | keys |
//! |---|---|
//! | `run` | command, n, p, family, phi, methods, fold_size, knots, degree, placement, standardized, screened, n_candidates, seed |
//! | `candidate` | index, nonparam, param, dim, loglik, converged |
//! | `weights` | method, weights, criterion |
//! | `importance` | method, variable, rank, v |
//! | `holdout` | split, method, n_train, n_test, kl_real, clipped |
//! | `holdout_summary` | method, splits, mean, se |
//! | `screen` | rank, variable, dcorr2 |
//! | `simulation` | example, n, rho, reps, failed, method, mean, se, mean_w_cor |
//! | `warning` | message |
//!
//! Non-finite numbers are written as `null`.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes every float in `{:.16e}` form.
pub struct SigFormatter;

impl Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes utf-8"))
}

pub struct Emitter {
    out: Box<dyn Write>,
}

impl Emitter {
    pub fn new(out: Box<dyn Write>) -> Self {
        Emitter { out }
    }

    pub fn stdout() -> Self {
        Emitter::new(Box::new(io::stdout().lock()))
    }

    pub fn emit(&mut self, record: &serde_json::Value) -> crate::Result<()> {
        writeln!(self.out, "{}", to_json_string(record)?)?;
        Ok(())
    }

    pub fn flush(&mut self) -> crate::Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a CSV table of preformatted cells.
pub fn write_table(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> crate::Result<()> {
    let err = |e: csv::Error| crate::CliError::Data(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_round_trip() {
        for v in [0.1f64, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 5e-324] {
            let s = to_json_string(&json!({ "v": v })).unwrap();
            let back: serde_json::Value = serde_json::from_str(&s).unwrap();
            assert_eq!(back["v"].as_f64().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(to_json_string(&json!({ "v": 0.5 })).unwrap(), r#"{"v":5.0000000000000000e-1}"#);
        assert_eq!(to_json_string(&json!({ "v": f64::NAN })).unwrap(), r#"{"v":null}"#);
    }
}
