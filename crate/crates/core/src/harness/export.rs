//! CSV, JSON and plot-data output.
//!
//! Every float is written with 17 significant digits in exponent form, so
//! files round-trip bit-exactly and are byte-stable for fixed input.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{io_err, regime_classify, HarnessError, SweepRow};

pub const CSV_HEADER: &str = "estimator,n,n_prime,d,delta,median_err_inf,median_err_l2,fail_rate,\
experiments,binary_queries,phase_queries,classical_samples,seed_base";

/// `{:.16e}` for finite values; `NaN`, `inf` and `-inf` otherwise.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.estimator.clone(),
            fmt_f64(r.n),
            r.n_prime.map(fmt_f64).unwrap_or_default(),
            r.d.to_string(),
            fmt_f64(r.delta),
            fmt_f64(r.median_err_inf),
            fmt_f64(r.median_err_l2),
            fmt_f64(r.fail_rate),
            fmt_f64(r.experiments),
            fmt_f64(r.binary_queries),
            fmt_f64(r.phase_queries),
            r.classical_samples.to_string(),
            r.seed_base.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<(), HarnessError> {
    write_file(path, &rows_to_csv(rows))
}

struct SigFigs;

impl serde_json::ser::Formatter for SigFigs {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-digit floats and a trailing newline. Non-finite
/// floats become `null`.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigs);
    value
        .serialize(&mut ser)
        .map_err(|e| HarnessError::Config(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &to_json_string(value)?)
}

pub fn read_rows_json(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// One line per row: budget and median errors.
    ErrorVsBudget,
    /// One labelled cell per row: its `(n, n′)` and regime.
    RegimeMap,
}

/// Whitespace-separated columns under a `#` header line.
pub fn plot_data(rows: &[SweepRow], kind: PlotKind) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("plot data needs at least one row".into()));
    }
    let mut out = String::new();
    match kind {
        PlotKind::ErrorVsBudget => {
            out.push_str("# n n_prime median_err_inf median_err_l2 fail_rate\n");
            for r in rows {
                let np = r.n_prime.map(fmt_f64).unwrap_or_else(|| "NaN".into());
                out.push_str(&format!(
                    "{} {} {} {} {}\n",
                    fmt_f64(r.n),
                    np,
                    fmt_f64(r.median_err_inf),
                    fmt_f64(r.median_err_l2),
                    fmt_f64(r.fail_rate)
                ));
            }
        }
        PlotKind::RegimeMap => {
            out.push_str("# n n_prime d delta regime\n");
            for r in rows {
                let np = r
                    .n_prime
                    .ok_or_else(|| HarnessError::Config("regime map rows need n_prime".into()))?;
                let regime = regime_classify(r.n, np, r.d, r.delta);
                out.push_str(&format!("{} {} {} {} {}\n", fmt_f64(r.n), fmt_f64(np), r.d, fmt_f64(r.delta), regime.as_str()));
            }
        }
    }
    Ok(out)
}

pub fn emit_plot_data(rows: &[SweepRow], kind: PlotKind, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &plot_data(rows, kind)?)
}
