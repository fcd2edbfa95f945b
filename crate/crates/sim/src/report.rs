//! Study reports: long-format CSV rows.

use std::io::Write;

use sllg_core::scheme::RunOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowType {
    /// One trajectory.
    Run,
    /// Sample mean or standard error over trajectories at one resolution.
    Aggregate,
    /// Observed order log₂(e_ℓ / e_{ℓ+1}) between consecutive levels.
    Order,
}

impl RowType {
    pub fn name(&self) -> &'static str {
        match self {
            RowType::Run => "run",
            RowType::Aggregate => "aggregate",
            RowType::Order => "order",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub row_type: RowType,
    pub h: f64,
    pub k: f64,
    pub theta: f64,
    pub seed: u64,
    /// Sample (stream) index; `None` for aggregate and order rows.
    pub sample: Option<usize>,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<ReportRow>,
    /// Descriptions of invariant checks that failed.
    pub failures: Vec<String>,
}

impl StudyReport {
    pub const CSV_HEADER: &'static str = "row_type,h,k,theta,seed,sample,quantity,value";

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            let sample = r.sample.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{:.16e},{:.16e},{},{},{},{},{:.16e}",
                r.row_type.name(),
                r.h,
                r.k,
                r.theta,
                r.seed,
                sample,
                r.quantity,
                r.value
            )?;
        }
        Ok(())
    }

    /// Rows matching `row_type` and `quantity`, in report order.
    pub fn select<'a>(
        &'a self,
        row_type: RowType,
        quantity: &'a str,
    ) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.row_type == row_type && r.quantity == quantity)
    }

    /// Value of the single row matching all keys.
    pub fn value(&self, row_type: RowType, quantity: &str, k: f64) -> Option<f64> {
        self.select(row_type, quantity)
            .find(|r| r.k == k)
            .map(|r| r.value)
    }
}

/// Scalar summaries of one run, in a fixed order.
pub fn run_quantities(out: &RunOutput, dt: f64) -> Vec<(&'static str, f64)> {
    let d = &out.diagnostics;
    let n = d.len().max(1) as f64;
    let sup_energy = d
        .iter()
        .map(|s| s.energy_next)
        .fold(d.first().map_or(0.0, |s| s.energy), f64::max);
    let dissipation = dt * d.iter().map(|s| s.v_norm2).sum::<f64>();
    let mean = |f: fn(&sllg_core::scheme::StepDiagnostics) -> f64| d.iter().map(f).sum::<f64>() / n;
    vec![
        ("final_energy", out.final_state.energy),
        ("sup_energy", sup_energy),
        ("dissipation", dissipation),
        ("max_norm_defect", out.max_norm_defect()),
        ("mean_norm_defect", mean(|s| s.norm_defect)),
        ("max_tangency", out.max_tangency()),
        ("mean_tangency", mean(|s| s.tangency)),
        ("max_orthogonality", out.max_orthogonality()),
        ("mean_orthogonality", mean(|s| s.orthogonality)),
        ("max_energy_defect", out.max_energy_defect()),
        ("mean_energy_defect", mean(|s| s.energy_defect)),
        (
            "max_solver_residual",
            d.iter().map(|s| s.residual).fold(0.0, f64::max),
        ),
    ]
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_stderr_basic() {
        assert_eq!(mean_stderr(&[2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let r = StudyReport {
            rows: vec![ReportRow {
                row_type: RowType::Aggregate,
                h: 0.5,
                k: 0.1,
                theta: 1.0,
                seed: 3,
                sample: None,
                quantity: "mean:sup_energy".into(),
                value: 1.0,
            }],
            failures: vec![],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("aggregate,5.0000000000000000e-1,"));
        assert!(line.contains(",1,3,,mean:sup_energy,"));
    }
}
