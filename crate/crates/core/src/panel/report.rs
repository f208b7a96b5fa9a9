//! Regression tables: coefficient with stars over its clustered standard
//! error, then observations, R-squared and the dependent-variable mean.

use std::fmt::Write as _;

use super::estimate::{
    PanelEstimate, SweepRow, EXPOSURE, SHARE_ABOVE, SHARE_BELOW, SHARE_CLOSE, SHARE_FEMALE,
    SHARE_WHITE,
};
use super::Subset;
use crate::shares::grouped;

const ROWS: [(&str, &str); 6] = [
    (SHARE_CLOSE, "Share close thresh."),
    (SHARE_ABOVE, "Share close thresh. Above"),
    (SHARE_BELOW, "Share close thresh. Below"),
    (EXPOSURE, "Share China Import"),
    (SHARE_WHITE, "Share White"),
    (SHARE_FEMALE, "Share Female (voting age)"),
];

/// `***` below 0.01, `**` below 0.05, `*` below 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn header(e: &PanelEstimate) -> String {
    match e.subset {
        Subset::All => e.outcome.label().to_string(),
        Subset::RepWinning => format!("{} (R win)", e.outcome.label()),
        Subset::DemWinning => format!("{} (D win)", e.outcome.label()),
    }
}

fn table(title: &str, column_heads: &[String], estimates: &[&PanelEstimate]) -> String {
    const LABEL: usize = 28;
    let col = column_heads
        .iter()
        .map(|h| h.len() + 2)
        .max()
        .unwrap_or(0)
        .max(14);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<LABEL$}", "");
    for i in 0..estimates.len() {
        let _ = write!(out, "{:>col$}", format!("({})", i + 1));
    }
    out.push('\n');
    let _ = write!(out, "{:<LABEL$}", "VARIABLES");
    for h in column_heads {
        let _ = write!(out, "{h:>col$}");
    }
    out.push('\n');
    for (name, label) in ROWS {
        if !estimates.iter().any(|e| e.result.index_of(name).is_some()) {
            continue;
        }
        let _ = write!(out, "{label:<LABEL$}");
        for e in estimates {
            let cell = match (e.result.coefficient(name), e.result.p_value(name)) {
                (Some(b), Some(p)) => format!("{b:.3}{}", significance_stars(p)),
                _ => String::new(),
            };
            let _ = write!(out, "{cell:>col$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<LABEL$}", "");
        for e in estimates {
            let cell = e
                .result
                .standard_error(name)
                .map(|se| format!("({se:.3})"))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col$}");
        }
        out.push('\n');
    }
    let line = |out: &mut String, label: &str, f: &dyn Fn(&PanelEstimate) -> String| {
        let _ = write!(out, "{label:<LABEL$}");
        for e in estimates {
            let _ = write!(out, "{:>col$}", f(e));
        }
        out.push('\n');
    };
    line(&mut out, "Fixed effects", &|e| {
        if e.state_year_effects {
            "cell, state-year"
        } else {
            "cell, year"
        }
        .into()
    });
    line(&mut out, "Observations", &|e| {
        grouped(e.weighted_obs.round() as u64)
    });
    line(&mut out, "Cell-years", &|e| grouped(e.result.n_obs as u64));
    line(&mut out, "R-squared", &|e| {
        format!("{:.3}", e.result.r_squared)
    });
    line(&mut out, "Mean of dep. var.", &|e| {
        e.result
            .dep_var_mean
            .map(|m| format!("{m:.3}"))
            .unwrap_or_default()
    });
    if estimates.iter().any(|e| e.wald_above_below.is_some()) {
        line(&mut out, "Wald p (above = below)", &|e| {
            e.wald_above_below
                .map(|w| format!("{:.3}", w.p_value))
                .unwrap_or_default()
        });
    }
    out.push_str("*** p<0.01, ** p<0.05, * p<0.1\n");
    out.push_str("Cluster robust SE at county-by-congressional district in parenthesis.\n");
    out
}

/// One column per estimate.
pub fn render_estimate_table(title: &str, estimates: &[PanelEstimate]) -> String {
    let heads: Vec<String> = estimates.iter().map(header).collect();
    let refs: Vec<&PanelEstimate> = estimates.iter().collect();
    table(title, &heads, &refs)
}

/// One column per bandwidth.
pub fn render_sweep_table(title: &str, rows: &[SweepRow]) -> String {
    let heads: Vec<String> = rows.iter().map(|r| format!("BW {}", r.bandwidth)).collect();
    let refs: Vec<&PanelEstimate> = rows.iter().map(|r| &r.estimate).collect();
    table(title, &heads, &refs)
}
