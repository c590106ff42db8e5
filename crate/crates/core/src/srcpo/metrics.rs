//! Per-epoch metrics and their CSV encoding.
//!
//! Column order (N constraints, G grid points):
//!
//! ```text
//! epoch, env_steps, episode_reward, episode_cost_0 .. episode_cost_{N-1},
//! modal_index, modal_beta, modal_j_r, modal_j_c_0 .. modal_j_c_{N-1},
//! entropy, satisfied, violated, lambda_mean, lambda_max, nu_mean, alpha_mean,
//! j_r_0 .. j_r_{G-1}, j_c_0_0 .. j_c_0_{G-1}, .., j_c_{N-1}_{G-1}
//! ```
//!
//! `episode_*` are sample means of discounted returns over the epoch's
//! rollouts and are empty in tabular mode. `modal_beta` lists constraints
//! separated by `;` and entries by a space. Numbers use 12 significant digits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::risk::BetaParam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub env_steps: u64,
    pub episode_reward: Option<f64>,
    pub episode_cost: Vec<Option<f64>>,
    pub modal_index: usize,
    pub modal_beta: Vec<BetaParam>,
    pub modal_j_r: f64,
    pub modal_j_c: Vec<f64>,
    pub entropy: f64,
    pub satisfied: usize,
    pub violated: usize,
    pub lambda_mean: f64,
    pub lambda_max: f64,
    pub nu_mean: f64,
    pub alpha_mean: f64,
    /// Exact J_R of every grid point's policy.
    pub j_r: Vec<f64>,
    /// Exact J_{C_i} per constraint, then per grid point.
    pub j_c: Vec<Vec<f64>>,
}

/// Decimal with 12 significant digits; scientific outside [1e-6, 1e15).
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs();
    if !(1e-6..1e15).contains(&mag) {
        return format!("{x:.11e}");
    }
    let exponent = mag.log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn fmt_betas(betas: &[BetaParam]) -> String {
    betas
        .iter()
        .map(|b| b.as_slice().iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn csv_header(n_costs: usize, grid: usize) -> String {
    let mut cols: Vec<String> = vec!["epoch".into(), "env_steps".into(), "episode_reward".into()];
    cols.extend((0..n_costs).map(|i| format!("episode_cost_{i}")));
    cols.extend(["modal_index", "modal_beta", "modal_j_r"].map(String::from));
    cols.extend((0..n_costs).map(|i| format!("modal_j_c_{i}")));
    cols.extend(
        [
            "entropy",
            "satisfied",
            "violated",
            "lambda_mean",
            "lambda_max",
            "nu_mean",
            "alpha_mean",
        ]
        .map(String::from),
    );
    cols.extend((0..grid).map(|k| format!("j_r_{k}")));
    for i in 0..n_costs {
        cols.extend((0..grid).map(|k| format!("j_c_{i}_{k}")));
    }
    cols.join(",")
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let mut cols = vec![
            self.epoch.to_string(),
            self.env_steps.to_string(),
            opt(self.episode_reward),
        ];
        cols.extend(self.episode_cost.iter().map(|&v| opt(v)));
        cols.push(self.modal_index.to_string());
        cols.push(fmt_betas(&self.modal_beta));
        cols.push(fmt_num(self.modal_j_r));
        cols.extend(self.modal_j_c.iter().map(|&v| fmt_num(v)));
        cols.push(fmt_num(self.entropy));
        cols.push(self.satisfied.to_string());
        cols.push(self.violated.to_string());
        for v in [self.lambda_mean, self.lambda_max, self.nu_mean, self.alpha_mean] {
            cols.push(fmt_num(v));
        }
        cols.extend(self.j_r.iter().map(|&v| fmt_num(v)));
        for row in &self.j_c {
            cols.extend(row.iter().map(|&v| fmt_num(v)));
        }
        cols.join(",")
    }
}

/// Writes the header and one row per record.
pub fn write_csv<W: Write>(out: &mut W, n_costs: usize, grid: usize, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(n_costs, grid))?;
    for r in records {
        writeln!(out, "{}", r.to_csv_row())?;
    }
    Ok(())
}
