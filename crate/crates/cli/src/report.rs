//! Plain-text tables.

use std::fmt::Write as _;

use crate::commands::{AblationTable, EvaluationOutput};

/// One row per horizon and model: MSE, MAE, RSE, CRPS and PI coverage.
pub fn metrics_text(e: &EvaluationOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}  {:<12} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "Horizon", "Model", "MSE", "MAE", "RSE", "CRPS", "PI-Cov"
    );
    for r in e.reports.iter().chain(&e.baseline) {
        let _ = writeln!(
            s,
            "{:>8}  {:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.3}",
            r.horizon, r.model, r.mse, r.mae, r.rse, r.crps, r.pi_coverage
        );
    }
    for h in &e.skipped {
        let _ = writeln!(s, "{h:>8}  skipped");
    }
    s
}

/// Variants down, horizons across; each ablation cell carries its change
/// relative to the full model.
pub fn ablation_text(t: &AblationTable) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<20}", "Variant");
    for h in &t.horizons {
        let _ = write!(s, " {:>20}", format!("MSE@{h}"));
    }
    s.push('\n');
    for (i, row) in t.rows.iter().enumerate() {
        let _ = write!(s, "{:<20}", row.label);
        for (m, d) in row.mse.iter().zip(&row.delta_pct) {
            let cell = if i == 0 {
                format!("{m:.4}")
            } else {
                format!("{m:.4} ({d:+.1}%)")
            };
            let _ = write!(s, " {cell:>20}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::{AblationRow, Variant};

    #[test]
    fn ablation_layout() {
        let t = AblationTable {
            dataset: "d".into(),
            seed: 0,
            horizons: vec![24, 48],
            rows: Variant::ALL
                .iter()
                .map(|v| AblationRow {
                    variant: *v,
                    label: v.label().into(),
                    mse: vec![1.0, 2.0],
                    delta_pct: vec![0.0, 12.5],
                })
                .collect(),
        };
        let text = ablation_text(&t);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].contains("MSE@24") && lines[0].contains("MSE@48"));
        assert!(lines[1].starts_with("Full Model"));
        assert!(!lines[1].contains('%'));
        assert!(lines[2].contains("(+12.5%)"));
    }
}
