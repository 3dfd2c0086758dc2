//! Regret CSV: `round`, then `<name>_mean,<name>_stderr` per policy.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::AggregateTrace;

/// `%g` with six significant digits.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Renders the CSV text. All traces must share one strictly increasing round grid.
pub fn render_csv(aggregates: &[(String, AggregateTrace)]) -> Result<String> {
    let (_, first) = aggregates
        .first()
        .ok_or_else(|| Error::Runtime("no aggregates to write".into()))?;
    if let Some((name, _)) = aggregates.iter().find(|(_, a)| a.rounds != first.rounds) {
        return Err(Error::Runtime(format!(
            "policy `{name}` has a different round grid"
        )));
    }
    if first.rounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Runtime(
            "round grid is not strictly increasing".into(),
        ));
    }
    let mut out = String::from("round");
    for (name, _) in aggregates {
        let _ = write!(out, ",{name}_mean,{name}_stderr");
    }
    out.push('\n');
    for (i, round) in first.rounds.iter().enumerate() {
        let _ = write!(out, "{round}");
        for (_, a) in aggregates {
            let _ = write!(out, ",{},{}", format_g6(a.mean[i]), format_g6(a.stderr[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes (or overwrites) the CSV at `path`, creating parent directories.
pub fn write_csv(aggregates: &[(String, AggregateTrace)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_csv(aggregates)?;
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}
