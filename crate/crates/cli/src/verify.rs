//! `verify`: the planar correlation experiments as a pass/fail table.

use geofuse_core::experiments::{
    convergence_distances, matern_convergence, partition_correlations, subset_correlations, PartitionGeometry, SubsetGeometry,
    CONVERGENCE_MESH,
};
use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable target, e.g. `0.19 ± 0.03`.
    pub target: String,
    pub pass: bool,
}

fn near(name: &str, value: f64, want: f64, tol: f64) -> Check {
    Check { name: name.into(), value, target: format!("{want} ± {tol}"), pass: (value - want).abs() <= tol }
}

fn at_most(name: &str, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, target: format!("<= {bound:e}"), pass: value <= bound }
}

pub fn run_checks() -> CliResult<Vec<Check>> {
    let s = subset_correlations(&SubsetGeometry::default())?;
    let p = partition_correlations(&PartitionGeometry::default())?;
    let (side, edge) = CONVERGENCE_MESH;
    let d = convergence_distances(1.0);
    let coarse = matern_convergence(side, edge, 1.0, &d)?;
    let fine = matern_convergence(side, 0.5 * edge, 1.0, &d)?;
    Ok(vec![
        near("removed block: stationary corr(A,B)", s.stationary_ab, 0.19, 0.03),
        at_most("removed block: subset corr(A,B)", s.subset_ab, 1e-4),
        near("removed block: subset corr(A,C)", s.subset_ac, 0.27, 0.03),
        near("partition: corr(A,B)", p.ab, 0.23, 0.03),
        near("partition: corr(A,D)", p.ad, 0.28, 0.03),
        near("partition: corr(B,C)", p.bc, 0.14, 0.03),
        near("partition: corr(C,D)", p.cd, 0.18, 0.03),
        at_most("matern: max abs error", coarse.max_abs_error, 0.05),
        Check {
            name: "matern: error shrinks when max_edge halves".into(),
            value: fine.max_abs_error,
            target: format!("< {:.4}", coarse.max_abs_error),
            pass: fine.max_abs_error < coarse.max_abs_error,
        },
        near("matern: correlation at distance rho", coarse.gmrf[9], 0.13, 0.02),
    ])
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{:<width$}  {:>12.6e}  {:<16}  {}\n",
            c.name,
            c.value,
            c.target,
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    s
}
