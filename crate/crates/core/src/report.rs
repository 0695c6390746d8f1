//! Fixed numeric formatting for report and curve files.

/// Six significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A rate as a percentage with one decimal, e.g. `0.1234 -> "12.3"`.
pub fn fmt_pct(rate: f64) -> String {
    format!("{:.1}", rate * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
}

/// Renders rows either as an aligned text table or as CSV.
pub fn render_table(header: &[&str], rows: &[Vec<String>], format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for r in rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: Vec<&str>| {
                let mut s = String::new();
                for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                    if i > 0 {
                        s.push_str("  ");
                    }
                    s.push_str(&format!("{c:<w$}"));
                }
                s.trim_end().to_string() + "\n"
            };
            out.push_str(&line(header.to_vec()));
            let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
            for r in rows {
                out.push_str(&line(r.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}
