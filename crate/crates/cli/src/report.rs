//! CSV output.

use std::io::Write;

use anyhow::Result;
use ihdg_core::analysis::ConvergenceReport;
use ihdg_core::study::{Comparison, MethodRun};

pub fn format_error(e: f64) -> String {
    format!("{e:.2e}")
}

pub fn format_order(order: Option<f64>) -> String {
    order.map_or_else(String::new, |o| format!("{o:.2}"))
}

/// One row per level: `k,mesh,err_q,order_q,err_u,order_u`.
pub fn write_convergence<W: Write>(out: W, report: &ConvergenceReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "mesh", "err_q", "order_q", "err_u", "order_u"])?;
    for lv in &report.levels {
        w.write_record([
            report.k.to_string(),
            lv.elements.to_string(),
            format_error(lv.err_q),
            format_order(lv.order_q),
            format_error(lv.err_u),
            format_order(lv.order_u),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const COMPARE_HEADER: [&str; 8] = [
    "mesh",
    "method",
    "step",
    "iteration",
    "residual",
    "nonlinear_s",
    "jacobian_s",
    "solve_s",
];

fn write_iterations<W: Write>(w: &mut csv::Writer<W>, mesh: usize, run: &MethodRun) -> Result<()> {
    for d in &run.diagnostics {
        for (i, r) in d.records.iter().enumerate() {
            w.write_record([
                mesh.to_string(),
                run.method.name().to_string(),
                d.step.to_string(),
                (i + 1).to_string(),
                format!("{:.3e}", r.residual),
                format!("{:.3e}", r.nonlinear_time.as_secs_f64()),
                format!("{:.3e}", r.jacobian_time.as_secs_f64()),
                format!("{:.3e}", r.solve_time.as_secs_f64()),
            ])?;
        }
    }
    Ok(())
}

/// Per-iteration timings of both methods for every compared level.
pub fn write_compare<W: Write>(out: W, runs: &[Comparison]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER)?;
    for c in runs {
        let mesh = c.interpolatory.errors.elements;
        write_iterations(&mut w, mesh, &c.interpolatory)?;
        write_iterations(&mut w, mesh, &c.standard)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable summary of a comparison.
pub fn compare_summary(c: &Comparison) -> String {
    let line = |r: &MethodRun| {
        format!(
            "  {:<13} err_q {}  err_u {}  iterations {}  construction/iter {:.3e} s",
            r.method.name(),
            format_error(r.errors.err_q),
            format_error(r.errors.err_u),
            r.iterations(),
            r.mean_construction_time().as_secs_f64()
        )
    };
    format!(
        "mesh {} elements\n{}\n{}\n  max coefficient gap {:.3e}, standard/interpolatory construction time {:.2}\n",
        c.interpolatory.errors.elements,
        line(&c.interpolatory),
        line(&c.standard),
        c.max_coefficient_gap,
        c.construction_ratio()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ihdg_core::analysis::{convergence_orders, LevelErrors};

    #[test]
    fn table_formatting() {
        assert_eq!(format_error(0.0157), "1.57e-2");
        assert_eq!(format_error(3.2149e-2), "3.21e-2");
        assert_eq!(format_order(Some(2.0208)), "2.02");
        assert_eq!(format_order(None), "");
    }

    #[test]
    fn convergence_rows() {
        let lv = |elements, h, e| LevelErrors {
            elements,
            h,
            err_q: e,
            err_u: e / 2.0,
        };
        let r = convergence_orders(1, &[lv(256, 0.125, 4e-2), lv(1024, 0.0625, 1e-2)]).unwrap();
        let mut buf = Vec::new();
        write_convergence(&mut buf, &r).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,mesh,err_q,order_q,err_u,order_u\n1,256,4.00e-2,,2.00e-2,\n1,1024,1.00e-2,2.00,5.00e-3,2.00\n"
        );
    }
}
