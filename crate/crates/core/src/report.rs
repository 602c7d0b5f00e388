//! CSV and text serialization of results.
//!
//! Every file starts with `# key: value` comment lines. Floats use Rust's
//! shortest round-trip formatting, so identical results give identical bytes.

use std::fmt::Write;

use crate::awep::AwepReport;
use crate::eigen::MonomialExpansion;
use crate::sim::{ConvergenceRow, CurvePoint, Gap};

/// Identifies the run that produced a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").into(), config_hash: config_hash.into(), seed }
    }
}

fn header(prov: &Provenance, extra: &[(&str, String)]) -> String {
    let mut s = format!("# version: {}\n# config_hash: {}\n# seed: {}\n", prov.version, prov.config_hash, prov.seed);
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

/// Shortest round-trip text; scientific outside `[1e-3, 1e6)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Reads the `# key: value` header lines of a file written here.
pub fn parse_header(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map_while(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

/// Analytic report, with simulated columns left empty where absent.
pub fn awep_report_csv(report: &AwepReport, prov: &Provenance) -> String {
    let vacuous: Vec<String> = report.vacuous_points().iter().map(|s| s.to_string()).collect();
    let mut s = header(
        prov,
        &[
            ("G_d", report.diversity.to_string()),
            ("fitted_slope", opt(report.fitted_slope)),
            ("coding_gain", opt(report.coding_gain)),
            ("vacuous_snr_db", if vacuous.is_empty() { "none".into() } else { vacuous.join(" ") }),
        ],
    );
    s.push_str("snr_db,awep_ub,awep_asym,awep_mc,mc_ci_lo,mc_ci_hi\n");
    for (i, snr) in report.snr_db.iter().enumerate() {
        let mc = report.mc.get(i).copied().flatten();
        let _ = writeln!(
            s,
            "{snr},{},{},{},{},{}",
            num(report.upper_bound[i]),
            num(report.asymptotic[i]),
            opt(mc.map(|m| m.awep)),
            opt(mc.map(|m| m.ci_lo)),
            opt(mc.map(|m| m.ci_hi)),
        );
    }
    s
}

/// One simulated curve.
pub fn curve_csv(points: &[CurvePoint], detector: &str, prov: &Provenance, extra: &[(&str, String)]) -> String {
    let mut meta = vec![("detector", detector.to_string())];
    meta.extend(extra.iter().cloned());
    let mut s = header(prov, &meta);
    s.push_str("snr_db,words,errors,awep,ci_lo,ci_hi\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.snr_db, p.words, p.errors, num(p.awep), num(p.ci_lo), num(p.ci_hi));
    }
    s
}

pub fn convergence_csv(rows: &[ConvergenceRow], prov: &Provenance) -> String {
    let snr = rows.first().map(|r| r.point.snr_db.to_string()).unwrap_or_default();
    let mut s = header(prov, &[("snr_db", snr)]);
    s.push_str("detector,iterations,words,errors,awep,ci_lo,ci_hi\n");
    for r in rows {
        let p = &r.point;
        let it = r.iterations.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{it},{},{},{},{},{}", r.detector, p.words, p.errors, num(p.awep), num(p.ci_lo), num(p.ci_hi));
    }
    s
}

/// Several curves on one grid, one column per system.
pub fn merged_csv(snr_db: &[f64], curves: &[(String, Vec<f64>)], prov: &Provenance) -> String {
    let mut s = header(prov, &[]);
    s.push_str("snr_db");
    for (name, _) in curves {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for (i, snr) in snr_db.iter().enumerate() {
        let _ = write!(s, "{snr}");
        for (_, v) in curves {
            let _ = write!(s, ",{}", num(v[i]));
        }
        s.push('\n');
    }
    s
}

pub fn gaps_csv(reference: &str, gaps: &[Gap], prov: &Provenance) -> String {
    let mut s = header(prov, &[("reference", reference.to_string())]);
    s.push_str("system,target_awep,gap_db,kind\n");
    for g in gaps {
        let kind = serde_json::to_value(g.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{kind}", g.system, num(g.target), opt(g.gap_db));
    }
    s
}

/// Monomial table with the term count in the header and `C` in the footer.
pub fn expansion_text(exp: &MonomialExpansion, prov: &Provenance) -> String {
    let mut s = header(
        prov,
        &[("n_t", exp.n_t.to_string()), ("n_r", exp.n_r.to_string()), ("terms", exp.count().to_string())],
    );
    s.push_str(&exp.to_table());
    let _ = writeln!(s, "# C: {}", exp.normalizer_exact());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::awep::McEstimate;
    use crate::eigen::expand_ordered_pdf;

    #[test]
    fn report_columns_and_header() {
        let r = AwepReport {
            snr_db: vec![0.0, 10.0],
            upper_bound: vec![2.5, 0.01],
            asymptotic: vec![1.0, 0.009],
            mc: vec![None, Some(McEstimate { awep: 0.005, ci_lo: 0.004, ci_hi: 0.006, words: 1000, errors: 5 })],
            diversity: 4,
            fitted_slope: None,
            coding_gain: None,
        };
        let text = awep_report_csv(&r, &Provenance::new("abc", 7));
        let h = parse_header(&text);
        assert!(h.contains(&("G_d".into(), "4".into())));
        assert!(h.contains(&("seed".into(), "7".into())));
        assert!(h.contains(&("vacuous_snr_db".into(), "0".into())));
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "snr_db,awep_ub,awep_asym,awep_mc,mc_ci_lo,mc_ci_hi");
        assert_eq!(rows[1], "0,2.5,1,,,");
        assert_eq!(rows[2], "10,0.01,0.009,0.005,0.004,0.006");
        assert_eq!(num(2.5e-11), "2.5e-11");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn expansion_footer() {
        let exp = expand_ordered_pdf(2, 2).unwrap();
        let text = expansion_text(&exp, &Provenance::new("x", 0));
        assert_eq!(MonomialExpansion::parse_table(&text).unwrap().len(), exp.count());
        assert!(text.trim_end().ends_with(&format!("# C: {}", exp.normalizer_exact())));
    }
}
