//! CSV tables for every report type. Column order and number formatting are
//! fixed so that identical runs give identical bytes.

use crate::atomic::DecompositionReport;
use crate::geom_suite::CheckResult;
use crate::inclusion::GridRow;
use crate::interpolation::{InterpolationReport, SchurReport};
use crate::io::{fmt_f64, CsvTable};
use crate::kernels::{DiagonalReport, IntPowerReport, UpperReport};
use crate::lattice::{GammaReport, SeparatedSet};
use crate::quadrature::IjReport;

pub fn checks_csv(results: &[(usize, CheckResult)]) -> CsvTable {
    let mut t = CsvTable::new(&["n", "check", "cases", "max_violation", "violations", "status"]);
    for (n, r) in results {
        t.push(vec![
            n.to_string(),
            r.name.to_string(),
            r.cases.to_string(),
            fmt_f64(r.max_violation),
            r.violations.to_string(),
            if r.passed() { "pass" } else { "fail" }.into(),
        ]);
    }
    t
}

/// Columns `index, x1..xn`.
pub fn lattice_csv(set: &SeparatedSet) -> CsvTable {
    let names: Vec<String> = (1..=set.n).map(|i| format!("x{i}")).collect();
    let mut header = vec!["index"];
    header.extend(names.iter().map(String::as_str));
    let mut t = CsvTable::new(&header);
    for m in 0..set.len() {
        let mut row = vec![m.to_string()];
        row.extend(set.point(m).iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    t
}

pub fn gamma_csv(reports: &[GammaReport]) -> CsvTable {
    let mut t = CsvTable::new(&["gamma", "r_max", "points", "sum", "exponent", "diagnosis"]);
    for g in reports {
        let e = g.exponent.map(fmt_f64).unwrap_or_else(|| "none".into());
        for (i, rm) in g.radii.iter().enumerate() {
            t.push(vec![
                fmt_f64(g.gamma),
                fmt_f64(*rm),
                g.counts[i].to_string(),
                fmt_f64(g.sums[i]),
                e.clone(),
                g.diagnosis.name().into(),
            ]);
        }
    }
    t
}

pub fn decomposition_csv(rep: &DecompositionReport) -> CsvTable {
    let mut t = CsvTable::new(&["iteration", "residual_norm", "ratio", "sampled_norm"]);
    for (j, r) in rep.residual_norms.iter().enumerate() {
        let ratio = if j == 0 { String::new() } else { fmt_f64(rep.contraction_estimates[j - 1]) };
        t.push(vec![j.to_string(), fmt_f64(*r), ratio, fmt_f64(rep.sampled_norms[j])]);
    }
    t
}

pub fn coefficients_csv(rep: &DecompositionReport) -> CsvTable {
    let mut t = CsvTable::new(&["m", "lambda", "atom_weight"]);
    for (m, (l, w)) in rep.lambda.values.iter().zip(&rep.atom_weights).enumerate() {
        t.push(vec![m.to_string(), fmt_f64(*l), fmt_f64(*w)]);
    }
    t
}

pub fn interpolation_csv(rep: &InterpolationReport) -> CsvTable {
    let mut t = CsvTable::new(&["iteration", "residual_norm", "ratio"]);
    for (j, r) in rep.residual_norms.iter().enumerate() {
        let ratio = if j == 0 { String::new() } else { fmt_f64(rep.ratios[j - 1]) };
        t.push(vec![j.to_string(), fmt_f64(*r), ratio]);
    }
    t
}

/// Columns `m, gamma, row_sum, col_sum`.
pub fn schur_csv(rep: &SchurReport) -> CsvTable {
    let mut t = CsvTable::new(&["m", "gamma", "row_sum", "col_sum"]);
    for m in 0..rep.gamma_weights.len() {
        t.push(vec![m.to_string(), fmt_f64(rep.gamma_weights[m]), fmt_f64(rep.row_sums[m]), fmt_f64(rep.col_sums[m])]);
    }
    t
}

pub fn inclusion_csv(rows: &[GridRow]) -> CsvTable {
    let mut t = CsvTable::new(&["p", "alpha", "q", "beta", "branch", "verdict", "slope_or_gamma", "evidence_flag"]);
    for r in rows {
        let q = &r.query;
        t.push(vec![
            fmt_f64(q.p),
            fmt_f64(q.alpha),
            fmt_f64(q.q),
            fmt_f64(q.beta),
            r.verdict.branch.name().into(),
            r.verdict.included.to_string(),
            fmt_f64(r.slope_or_gamma),
            r.evidence.to_string(),
        ]);
    }
    t
}

pub fn upper_csv(rep: &UpperReport, strata: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["stratum", "c_emp", "c_grad"]);
    for (i, s) in strata.iter().enumerate() {
        t.push(vec![fmt_f64(*s), fmt_f64(rep.per_stratum[i]), fmt_f64(rep.per_stratum_grad[i])]);
    }
    t.push(vec!["all".into(), fmt_f64(rep.c_emp), fmt_f64(rep.c_grad)]);
    t
}

pub fn diagonal_csv(rep: &DiagonalReport) -> CsvTable {
    let mut t = CsvTable::new(&["radius", "diagonal", "slope", "expected"]);
    for (r, v) in rep.radii.iter().zip(&rep.values) {
        t.push(vec![fmt_f64(*r), fmt_f64(*v), fmt_f64(rep.slope), fmt_f64(rep.expected)]);
    }
    t
}

pub fn int_power_csv(rep: &IntPowerReport) -> CsvTable {
    let mut t = CsvTable::new(&["radius", "integral", "slope", "predicted"]);
    for (r, v) in rep.radii.iter().zip(&rep.values) {
        t.push(vec![fmt_f64(*r), fmt_f64(*v), fmt_f64(rep.slope), fmt_f64(rep.predicted)]);
    }
    t
}

pub fn ij_csv(rep: &IjReport) -> CsvTable {
    let mut t = CsvTable::new(&["radius", "i_c", "j_bc", "envelope"]);
    for row in &rep.rows {
        t.push(vec![fmt_f64(row.t), fmt_f64(row.i_c), fmt_f64(row.j_bc), fmt_f64(row.envelope)]);
    }
    t
}
