//! Tab-separated training logs.

use std::io::Write;

use crate::error::Result;
use crate::evaluation::EvaluationReport;
use crate::training::elbo::ElboBreakdown;

/// Column names of the per-step log for a model with `layers` latent layers.
pub fn metrics_header(layers: usize) -> String {
    let mut cols = vec!["step".to_string(), "total".into(), "reconstruction".into()];
    cols.extend((1..=layers).map(|l| format!("kl_z_{l}")));
    cols.extend((1..=layers).map(|l| format!("kl_y_{l}")));
    cols.extend(["tau".to_string(), "wall_ms".into()]);
    cols.join("\t")
}

/// One log row; values use the shortest exact decimal form.
pub fn metrics_row(step: usize, b: &ElboBreakdown, tau: f64, wall_ms: u128) -> String {
    let mut cols = vec![step.to_string(), b.total.to_string(), b.reconstruction.to_string()];
    cols.extend(b.kl_z.iter().map(f64::to_string));
    cols.extend(b.kl_y.iter().map(f64::to_string));
    cols.extend([tau.to_string(), wall_ms.to_string()]);
    cols.join("\t")
}

pub const EVAL_HEADER: &str = "step\tlayer\tchannel\tinjective\tmany-to-one";

pub fn write_eval_rows(out: &mut dyn Write, step: usize, report: &EvaluationReport) -> Result<()> {
    for c in &report.channels {
        writeln!(
            out,
            "{step}\t{}\t{}\t{}\t{}",
            report.layer + 1,
            c.name,
            c.injective.accuracy,
            c.many_to_one.accuracy
        )
        .map_err(|e| crate::error::Error::io("evaluation log", e))?;
    }
    Ok(())
}

/// Parsed per-step log: the header and each row's columns.
pub fn parse_metrics(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split('\t').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_row_width() {
        let b = ElboBreakdown {
            reconstruction: -1.5,
            kl_z: vec![0.1, 0.2],
            kl_y: vec![0.0, 0.3],
            total: -2.1,
        };
        let h = metrics_header(2);
        let r = metrics_row(7, &b, 0.75, 12);
        assert_eq!(h.split('\t').count(), r.split('\t').count());
        let (cols, rows) = parse_metrics(&format!("{h}\n{r}\n"));
        assert_eq!(cols[3], "kl_z_1");
        assert_eq!(rows[0][1], -2.1);
    }
}
