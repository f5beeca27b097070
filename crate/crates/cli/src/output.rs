//! Report rendering: JSON (canonical), line-oriented text, and CSV where a
//! report is naturally tabular.
//!
//! Every JSON report carries the same `version`/`kind` envelope as input
//! documents, so emitted reports re-parse under the input schema. All
//! floating-point output — in every format — is rounded to 10 significant
//! digits so reports are stable golden files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use qsample_core::cheat::{AuditReport, CheatReport, KitaevReport};
use qsample_core::correlation::{
    BiasFloor, ClosenessReport, Correlation, NonProductWitness, PartitionWitness,
};
use qsample_core::cutchoose::{SimReport, TrialRecord, WilsonInterval};

use crate::docs::{CliError, Result, SCHEMA_VERSION};

/// Output encodings selectable with `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Canonical JSON with the version/kind envelope.
    Json,
    /// Line-oriented human-readable text.
    Text,
    /// Comma-separated table (tabular reports only).
    Csv,
}

/// Formats a float with 10 significant digits, plain notation for moderate
/// exponents, scientific otherwise, trailing zeros trimmed.
pub fn g10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mut exp = x.abs().log10().floor() as i32;
    // Rounding at this exponent may carry into the next decade
    // (e.g. 9.9999999995 → 10.00000000); recompute once.
    let scale = 10f64.powi(9 - exp);
    let rounded = (x * scale).round() / scale;
    let exp2 = rounded.abs().log10().floor() as i32;
    if exp2 > exp {
        exp = exp2;
    }
    if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(&format!("{rounded:.decimals$}"))
    } else {
        let s = format!("{rounded:.9e}");
        let (mantissa, e) = s.split_once('e').expect("exponential format");
        format!("{}e{e}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.into();
    }
    s.trim_end_matches('0').trim_end_matches('.').into()
}

/// Rounds every non-integer number in a JSON tree to 10 significant digits.
fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("checked is_f64");
                if let Ok(r) = g10(x).parse::<f64>() {
                    if let Some(num) = serde_json::Number::from_f64(r) {
                        *n = num;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[derive(Serialize)]
struct ReportDoc<'a, T: Serialize> {
    version: u32,
    kind: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

/// Serializes a payload under the version/kind envelope.
fn json_doc<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let doc = ReportDoc { version: SCHEMA_VERSION, kind, payload };
    let mut value = serde_json::to_value(&doc)
        .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
    round_floats(&mut value);
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
    Ok(text + "\n")
}

fn csv_unsupported(kind: &str) -> CliError {
    CliError::Input(format!("--format csv is not supported for {kind}; use json or text"))
}

/// Writes `text` to `out` when given, else to stdout.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
    }
}

// ---------------------------------------------------------------------------
// Per-report renderers
// ---------------------------------------------------------------------------

#[derive(Serialize)]
pub struct CorrelationPayload {
    pub nx: usize,
    pub ny: usize,
    pub na: usize,
    pub nb: usize,
    /// Row-major over (x, y, a, b).
    pub table: Vec<f64>,
    /// `alice_marginals[x][a]` = p(a | x).
    pub alice_marginals: Vec<Vec<f64>>,
    /// `bob_marginals[y][b]` = p(b | y).
    pub bob_marginals: Vec<Vec<f64>>,
}

impl CorrelationPayload {
    pub fn from_correlation(c: &Correlation) -> Self {
        let (nx, ny, na, nb) = (c.nx(), c.ny(), c.na(), c.nb());
        CorrelationPayload {
            nx,
            ny,
            na,
            nb,
            table: c.table().to_vec(),
            alice_marginals: (0..nx)
                .map(|x| (0..na).map(|a| c.marginal_a(x, a)).collect())
                .collect(),
            bob_marginals: (0..ny)
                .map(|y| (0..nb).map(|b| c.marginal_b(y, b)).collect())
                .collect(),
        }
    }
}

pub fn render_correlation(c: &Correlation, fmt: Format) -> Result<String> {
    let payload = CorrelationPayload::from_correlation(c);
    match fmt {
        Format::Json => json_doc("correlation_report", &payload),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "correlation: {}x{} settings, {}x{} outcomes",
                payload.nx, payload.ny, payload.na, payload.nb
            );
            for x in 0..payload.nx {
                for y in 0..payload.ny {
                    for a in 0..payload.na {
                        for b in 0..payload.nb {
                            let idx = ((x * payload.ny + y) * payload.na + a) * payload.nb + b;
                            let _ = writeln!(
                                s,
                                "p({a},{b}|{x},{y}) = {}",
                                g10(payload.table[idx])
                            );
                        }
                    }
                }
            }
            for (x, row) in payload.alice_marginals.iter().enumerate() {
                for (a, p) in row.iter().enumerate() {
                    let _ = writeln!(s, "alice p({a}|{x}) = {}", g10(*p));
                }
            }
            for (y, row) in payload.bob_marginals.iter().enumerate() {
                for (b, p) in row.iter().enumerate() {
                    let _ = writeln!(s, "bob p({b}|{y}) = {}", g10(*p));
                }
            }
            Ok(s)
        }
        Format::Csv => {
            let mut s = String::from("x,y,a,b,p\n");
            for x in 0..payload.nx {
                for y in 0..payload.ny {
                    for a in 0..payload.na {
                        for b in 0..payload.nb {
                            let idx = ((x * payload.ny + y) * payload.na + a) * payload.nb + b;
                            let _ = writeln!(s, "{x},{y},{a},{b},{}", g10(payload.table[idx]));
                        }
                    }
                }
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
pub struct ProductPayload<'a> {
    pub product: bool,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<&'a NonProductWitness>,
}

pub fn render_product(payload: &ProductPayload, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("product_report", payload),
        Format::Text => {
            let mut s = format!("product: {}\ntol: {}\n", payload.product, g10(payload.tol));
            if let Some(w) = payload.witness {
                let _ = writeln!(
                    s,
                    "witness: x={} y={} a={} b={} violation={}",
                    w.x,
                    w.y,
                    w.a,
                    w.b,
                    g10(w.violation)
                );
            }
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("product_report")),
    }
}

pub fn render_bias_floor(report: &BiasFloor, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("bias_floor_report", report),
        Format::Text => {
            let mut s = format!("floor: {}\n", g10(report.floor));
            for r in &report.roots {
                let _ = writeln!(s, "root: a={} b={} delta={}", r.a, r.b, g10(r.delta));
            }
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("bias_floor_report")),
    }
}

pub fn render_closeness(report: &ClosenessReport, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("closeness_report", report),
        Format::Text => {
            let (x, y, a, b) = report.worst;
            Ok(format!(
                "within: {}\ndelta: {}\nmax_distance: {}\nworst: x={x} y={y} a={a} b={b}\n",
                report.within,
                g10(report.delta),
                g10(report.max_distance)
            ))
        }
        Format::Csv => Err(csv_unsupported("closeness_report")),
    }
}

#[derive(Serialize)]
pub struct CheatPayload {
    pub reports: Vec<CheatReport>,
}

fn cheat_line(r: &CheatReport) -> String {
    let solver = match &r.sdp {
        None => "constant".into(),
        Some(d) => format!("{:?} after {} iterations", d.status, d.iterations),
    };
    format!(
        "cheater={} outcome={} p_star={} honest={} receipts={} solver={solver}",
        r.cheater,
        r.outcome,
        g10(r.p_star),
        g10(r.honest_prob),
        r.receipts
    )
}

pub fn render_cheat(payload: &CheatPayload, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("cheat_report", payload),
        Format::Text => {
            let mut s = String::new();
            for r in &payload.reports {
                let _ = writeln!(s, "{}", cheat_line(r));
            }
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("cheat_report")),
    }
}

pub fn render_kitaev(report: &KitaevReport, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("kitaev_report", report),
        Format::Text => {
            let join = |v: &[f64]| v.iter().map(|x| g10(*x)).collect::<Vec<_>>().join(" ");
            let mut s = String::new();
            let _ = writeln!(s, "alice forcing: {}", join(&report.alice_forcing));
            let _ = writeln!(s, "bob forcing: {}", join(&report.bob_forcing));
            for (a, row) in report.residuals.iter().enumerate() {
                let _ = writeln!(s, "residual[a={a}]: {}", join(row));
            }
            let _ = writeln!(
                s,
                "min residual: {} at a={} b={}",
                g10(report.min_residual),
                report.worst_pair.0,
                report.worst_pair.1
            );
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("kitaev_report")),
    }
}

pub fn render_audit(report: &AuditReport, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("audit_report", report),
        Format::Text => {
            let mut s = format!("delta: {}\npassed: {}\n", g10(report.delta), report.passed);
            let mut worst: Option<f64> = None;
            for c in &report.checks {
                let _ = writeln!(
                    s,
                    "check: honest={} cheater={} outcome={} honest_p={} forced={} excess={} {}",
                    c.honest,
                    c.cheater,
                    c.outcome,
                    g10(c.honest_prob),
                    g10(c.forced_prob),
                    g10(c.excess),
                    if c.passed { "ok" } else { "FAIL" }
                );
                worst = Some(worst.map_or(c.excess, |w: f64| w.max(c.excess)));
            }
            if let Some(w) = worst {
                let _ = writeln!(s, "worst excess: {}", g10(w));
            }
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("audit_report")),
    }
}

#[derive(Serialize)]
pub struct MultipartyPayload {
    pub product: bool,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<PartitionWitness>,
}

pub fn render_multiparty(payload: &MultipartyPayload, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("multiparty_report", payload),
        Format::Text => {
            let mut s = format!("product: {}\ntol: {}\n", payload.product, g10(payload.tol));
            if let Some(w) = &payload.witness {
                let side: Vec<String> = w.side_a.iter().map(usize::to_string).collect();
                let _ = writeln!(
                    s,
                    "partition: [{}] vs rest, witness a={} b={} violation={}",
                    side.join(","),
                    w.witness.a,
                    w.witness.b,
                    g10(w.witness.violation)
                );
            }
            Ok(s)
        }
        Format::Csv => Err(csv_unsupported("multiparty_report")),
    }
}

fn interval(w: &WilsonInterval) -> String {
    format!("{} (95% CI [{}, {}])", g10(w.p_hat), g10(w.lo), g10(w.hi))
}

/// CSV table of per-trial records; also used by `--trial-csv`.
pub fn trial_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(
        "trial,aborted,failed_box,max_stat,certified,certified_tampered,outcome_a,outcome_b,delta_hat\n",
    );
    let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
    for r in records {
        let (oa, ob) = match r.outcome {
            Some((a, b)) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{oa},{ob},{}",
            r.trial,
            r.aborted,
            opt(r.failed_box),
            g10(r.max_stat),
            opt(r.certified),
            r.certified_tampered,
            r.delta_hat.map_or(String::new(), g10)
        );
    }
    s
}

pub fn render_sim(report: &SimReport, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => json_doc("sim_report", report),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "adversary: {}", report.adversary);
            let _ = writeln!(
                s,
                "boxes: {} ({} tested), shots per input: {}, trials: {}, seed: {}",
                report.n_boxes,
                report.k_tested,
                report.shots_per_input,
                report.trials,
                report.seed
            );
            let _ = writeln!(s, "tau: {}", g10(report.tau));
            let _ = writeln!(
                s,
                "aborts: {} of {}, rate {}",
                report.aborts,
                report.trials,
                interval(&report.abort_rate)
            );
            let _ = writeln!(s, "completed: {}", report.completed);
            if let Some(w) = &report.agreement {
                let _ = writeln!(s, "agreement: {}", interval(w));
            }
            if let Some(w) = &report.alice_zero {
                let _ = writeln!(s, "alice zero rate: {}", interval(w));
            }
            let _ = writeln!(s, "tampered boxes certified: {}", report.tampered_certified);
            if let Some(d) = report.delta_hat_max {
                let _ = writeln!(s, "max certified distance from target: {}", g10(d));
            }
            Ok(s)
        }
        Format::Csv => Ok(trial_csv(&report.records)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits_in_both_notations() {
        assert_eq!(g10(0.0), "0");
        assert_eq!(g10(0.5), "0.5");
        assert_eq!(g10(1.0), "1");
        assert_eq!(g10(-0.25), "-0.25");
        assert_eq!(g10((2f64.sqrt() - 1.0) / 2.0), "0.2071067812");
        assert_eq!(g10(1e-8), "1e-8");
        assert_eq!(g10(1.23456789012e12), "1.23456789e12");
        assert_eq!(g10(123.45678949), "123.4567895");
        // Rounding that carries across a decade keeps 10 significant digits.
        assert_eq!(g10(9.99999999996), "10");
        assert_eq!(g10(0.999999999996), "1");
    }

    #[test]
    fn json_reports_carry_the_envelope_and_rounded_floats() {
        #[derive(Serialize)]
        struct Demo {
            value: f64,
            count: usize,
        }
        let text = json_doc("demo_report", &Demo { value: 1.0 / 3.0, count: 7 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["kind"], "demo_report");
        assert_eq!(v["value"], 0.3333333333);
        assert_eq!(v["count"], 7);
    }

    #[test]
    fn trial_csv_has_one_line_per_record_plus_header() {
        let records = vec![
            TrialRecord {
                trial: 0,
                aborted: true,
                failed_box: Some(3),
                max_stat: 0.25,
                certified: None,
                certified_tampered: false,
                outcome: None,
                delta_hat: None,
            },
            TrialRecord {
                trial: 1,
                aborted: false,
                failed_box: None,
                max_stat: 0.01,
                certified: Some(5),
                certified_tampered: true,
                outcome: Some((0, 1)),
                delta_hat: Some(0.25),
            },
        ];
        let csv = trial_csv(&records);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,true,3,"));
        assert_eq!(lines[2], "1,false,,0.01,5,true,0,1,0.25");
    }
}
