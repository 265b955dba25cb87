//! Deterministic CSV and JSON emission. Floats are written with 17
//! significant digits so identical runs produce identical bytes.

use advsis_core::dynamics::{MonitorReport, SimulationTrace};
use advsis_core::mesh::Mesh;
use serde_json::{json, Map, Value};
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_profile(
    path: &Path,
    mesh: &Mesh,
    s: &[f64],
    i: &[f64],
) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "x,S,I")?;
    for k in 0..mesh.len() {
        writeln!(
            f,
            "{},{},{}",
            fmt_f64(mesh.centers[k]),
            fmt_f64(s[k]),
            fmt_f64(i[k])
        )?;
    }
    Ok(())
}

pub fn write_trace(
    path: &Path,
    trace: &SimulationTrace,
    monitors: &MonitorReport,
) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t,massS,massI,minI,F,ceiling_margin,gronwall_margin")?;
    for k in 0..trace.times.len() {
        let lyap = trace.lyapunov.get(k).copied().unwrap_or(f64::NAN);
        let ceil = if monitors.pointwise_applicable {
            monitors.pointwise_margins.get(k).copied().unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let gron = monitors.gronwall_margins.get(k).copied().unwrap_or(f64::NAN);
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            fmt_f64(trace.times[k]),
            fmt_f64(trace.mass_s[k]),
            fmt_f64(trace.mass_i[k]),
            fmt_f64(trace.min_i[k]),
            fmt_f64(lyap),
            fmt_f64(ceil),
            fmt_f64(gron)
        )?;
    }
    Ok(())
}

pub fn write_ladder(
    path: &Path,
    report: &crate::experiment::ConvergenceReport,
) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "param,error,order_estimate,runtime_s")?;
    for (k, p) in report.points.iter().enumerate() {
        // pairwise observed order between consecutive ladder points
        let order = if k == 0 {
            f64::NAN
        } else {
            let prev = &report.points[k - 1];
            ((p.error / prev.error).ln() / (p.param / prev.param).ln()).abs()
        };
        writeln!(
            f,
            "{},{},{},{}",
            fmt_f64(p.param),
            fmt_f64(p.error),
            fmt_f64(order),
            fmt_f64(p.runtime_s)
        )?;
    }
    Ok(())
}

/// Assemble and write `summary.json`. Runtimes live in their own top-level
/// field so determinism checks can exclude them; everything else is a pure
/// function of the inputs.
pub fn write_summary(
    path: &Path,
    config_hash: &str,
    config: &crate::config::Config,
    results: Value,
    runtimes_s: Value,
) -> Result<(), CliError> {
    let mut root = Map::new();
    root.insert("provenance".into(), json!({
        "config_hash": config_hash,
        "config": serde_json::to_value(config).expect("config serializes"),
    }));
    root.insert("results".into(), results);
    root.insert("runtimes_s".into(), runtimes_s);
    let text = serde_json::to_string_pretty(&Value::Object(root))
        .expect("summary serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Summary content with the runtime field removed, for byte comparisons.
pub fn summary_without_runtimes(text: &str) -> Result<String, CliError> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("summary is not JSON: {e}")))?;
    if let Some(map) = value.as_object_mut() {
        map.remove("runtimes_s");
    }
    Ok(serde_json::to_string_pretty(&value).expect("summary serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_deterministic() {
        assert_eq!(fmt_f64(0.1), fmt_f64(0.1));
        assert_eq!(fmt_f64(f64::NAN), "nan");
        let x = 1.0 / 3.0;
        let parsed: f64 = fmt_f64(x).parse().unwrap();
        assert_eq!(parsed.to_bits(), x.to_bits());
    }

    #[test]
    fn runtime_stripping() {
        let text = r#"{"provenance": {"a": 1}, "results": {"r": 2}, "runtimes_s": {"x": 0.5}}"#;
        let a = summary_without_runtimes(text).unwrap();
        let text2 = r#"{"provenance": {"a": 1}, "results": {"r": 2}, "runtimes_s": {"x": 99.0}}"#;
        let b = summary_without_runtimes(text2).unwrap();
        assert_eq!(a, b);
    }
}
