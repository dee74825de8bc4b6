//! Plain-text coefficient and latent-structure tables.

use std::fmt::Write;

use super::results::{coefficient_tables, latent_table, ResultsFile};

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.3}"))
}

fn p_value(v: Option<f64>) -> String {
    match v {
        None => "--".into(),
        Some(p) if p < 0.001 => "<0.001".into(),
        Some(p) => format!("{p:.3}"),
    }
}

/// Human-readable summary of a results file.
pub fn render_report(results: &ResultsFile) -> String {
    let mut s = String::new();
    let fit = &results.fit;
    let _ = writeln!(s, "K = {}, n = {}", results.spec.classes, results.n);
    let _ = writeln!(
        s,
        "log-likelihood {:.3}, parameters {}, BIC {:.3}, iterations {}, converged {}",
        results.loglik, results.npar, results.bic, fit.iterations, fit.converged
    );
    for w in fit.warnings.iter().chain(results.inference.iter().flat_map(|i| &i.warnings)) {
        let _ = writeln!(s, "warning: {w}");
    }
    for table in coefficient_tables(results) {
        let _ = writeln!(s, "\n== {} ==", table.name);
        let width = table.rows.iter().map(|(_, r)| r.term.chars().count()).max().unwrap_or(4).max(4);
        let _ = writeln!(s, "{:width$}  {:>10}  {:>8}  {:>8}  {:>7}", "term", "estimate", "s.e.", "t stat.", "p");
        let mut block = None;
        for (name, row) in &table.rows {
            if !name.is_empty() && block != Some(name) {
                let _ = writeln!(s, "-- {name}");
                block = Some(name);
            }
            let est = if row.reference { format!("{:.3}", 0.0) } else { format!("{:.3}", row.wald.estimate) };
            let _ = writeln!(
                s,
                "{:width$}  {:>10}  {:>8}  {:>8}  {:>7}",
                row.term,
                est,
                num(row.wald.se),
                num(row.wald.t),
                p_value(row.wald.p)
            );
        }
    }
    let k = results.spec.classes;
    let _ = writeln!(s, "\n== latent structure ==");
    let rows = latent_table(results);
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(2);
    let mut header = format!("{:width$}", "");
    for c in 1..=k {
        let _ = write!(header, "  {:>18}", format!("class {c}"));
    }
    let _ = writeln!(s, "{header}");
    for row in &rows {
        let mut line = format!("{:width$}", row.name);
        for c in 0..k {
            let cell = if k > 1 && c > 0 && row.contrast_p[c].is_some() {
                format!("{:.3} ({})", row.estimates[c], p_value(row.contrast_p[c]))
            } else {
                format!("{:.3}", row.estimates[c])
            };
            let _ = write!(line, "  {cell:>18}");
        }
        let _ = writeln!(s, "{line}");
    }
    if k > 1 {
        let _ = writeln!(s, "p-values in parentheses compare each class with class 1");
    }
    s
}
