use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HierModel;

use super::condition;

/// How the θ quadrature grid is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Regular grid over ±`half_width_sd` Laplace standard deviations around
    /// the posterior mode.
    ModeCentered { nodes_per_dim: usize, half_width_sd: f64, tol: f64, max_sweeps: usize },
    /// Per-dimension (lo, hi, count) in log units.
    Explicit { axes: Vec<(f64, f64, usize)> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::ModeCentered { nodes_per_dim: 5, half_width_sd: 3.0, tol: 1e-4, max_sweeps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaNode {
    pub theta: Vec<f64>,
    pub log_marginal: f64,
    pub log_prior: f64,
    pub log_weight: f64,
    pub weight: f64,
}

/// Weighted θ nodes approximating π(θ | ỹ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPosterior {
    pub names: Vec<String>,
    pub nodes: Vec<ThetaNode>,
    /// Grid axis values per dimension.
    pub axes: Vec<Vec<f64>>,
    pub mode: Vec<f64>,
    /// Laplace standard deviations at the mode (empty for explicit grids).
    pub laplace_sd: Vec<f64>,
}

/// exp(l − logsumexp(l)); non-finite entries get weight 0.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidState("no finite log weights".into()));
    }
    let s: f64 = log_w.iter().map(|v| if v.is_finite() { (v - max).exp() } else { 0.0 }).sum();
    Ok(log_w.iter().map(|v| if v.is_finite() { (v - max).exp() / s } else { 0.0 }).collect())
}

fn objective(model: &HierModel, theta: &[f64]) -> f64 {
    match condition(model, theta) {
        Ok(p) => p.log_weight(),
        Err(_) => f64::NEG_INFINITY,
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximises g on a line by bracketing and golden-section search; returns
/// (t, g(t)).
fn line_max(g: &mut dyn FnMut(f64) -> f64, g0: f64, step: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b);
    let gp = g(step);
    if gp > g0 {
        // Walk forward until the value drops.
        let (mut lo, mut mid, mut gmid) = (0.0, step, gp);
        let mut s = step;
        loop {
            s *= 2.0;
            let t = mid + s;
            let gt = g(t);
            if gt <= gmid || s > 1e3 {
                a = lo;
                b = t;
                break;
            }
            lo = mid;
            mid = t;
            gmid = gt;
        }
    } else {
        let gm = g(-step);
        if gm > g0 {
            let (mut hi, mut mid, mut gmid) = (0.0, -step, gm);
            let mut s = step;
            loop {
                s *= 2.0;
                let t = mid - s;
                let gt = g(t);
                if gt <= gmid || s > 1e3 {
                    a = t;
                    b = hi;
                    break;
                }
                hi = mid;
                mid = t;
                gmid = gt;
            }
        } else {
            a = -step;
            b = step;
        }
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while (b - a).abs() > tol {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
    }
    let (t, gt) = if gc > gd { (c, gc) } else { (d, gd) };
    if gt > g0 {
        (t, gt)
    } else {
        (0.0, g0)
    }
}

/// Posterior mode of θ via coordinate-wise golden-section ascent. Each sweep
/// ends with an extra line search along the sweep's net displacement.
pub fn find_mode(model: &HierModel, start: &[f64], tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let dim = start.len();
    let mut x = start.to_vec();
    let mut fx = objective(model, &x);
    if !fx.is_finite() {
        return Err(Error::Numerical { theta: format!("{x:?}"), reason: "objective is not finite at the starting point".into() });
    }
    let mut steps = vec![0.5; dim];
    let mut trace = vec![x.clone()];
    let mut last_step = f64::INFINITY;
    for _ in 0..max_sweeps {
        let x0 = x.clone();
        for d in 0..dim {
            let base = x.clone();
            let mut g = |t: f64| {
                let mut y = base.clone();
                y[d] += t;
                objective(model, &y)
            };
            let (t, ft) = line_max(&mut g, fx, steps[d], tol);
            x[d] += t;
            fx = ft;
            steps[d] = (2.0 * t.abs()).clamp(4.0 * tol, 0.5);
        }
        let dir: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dim > 1 && len > tol {
            let unit: Vec<f64> = dir.iter().map(|v| v / len).collect();
            let base = x.clone();
            let mut g = |t: f64| {
                let y: Vec<f64> = base.iter().zip(&unit).map(|(b, u)| b + t * u).collect();
                objective(model, &y)
            };
            let (t, ft) = line_max(&mut g, fx, len.min(0.5), tol);
            for (xi, u) in x.iter_mut().zip(&unit) {
                *xi += t * u;
            }
            fx = ft;
        }
        last_step = x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.push(x.clone());
        if last_step < tol {
            return Ok(x);
        }
    }
    Err(Error::ModeSearch { iterations: max_sweeps, last_step, trace })
}

/// Negative inverse Hessian of the log posterior by central differences,
/// reduced to marginal standard deviations.
pub fn laplace_sd(model: &HierModel, mode: &[f64], h: f64) -> Vec<f64> {
    let dim = mode.len();
    let f0 = objective(model, mode);
    let at = |shift: &[(usize, f64)]| {
        let mut y = mode.to_vec();
        for &(d, s) in shift {
            y[d] += s;
        }
        objective(model, &y)
    };
    let mut hess = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        hess[(i, i)] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let neg = -hess.clone();
    if let Some(ch) = neg.clone().cholesky() {
        let cov = ch.inverse();
        return (0..dim).map(|d| cov[(d, d)].sqrt()).collect();
    }
    // Fall back to curvature along each axis.
    (0..dim)
        .map(|d| {
            let c = -hess[(d, d)];
            if c > 0.0 && c.is_finite() {
                (1.0 / c).sqrt()
            } else {
                model.layout.prior_var[d].sqrt()
            }
        })
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Deterministic quadrature over θ.
pub fn integrate_hyperparameters(model: &HierModel, spec: &GridSpec) -> Result<HyperPosterior> {
    let dim = model.layout.dim();
    let (axes, mode, sd) = match spec {
        GridSpec::Explicit { axes } => {
            if axes.len() != dim {
                return Err(Error::Config(format!("explicit grid has {} axes, model has {dim} parameters", axes.len())));
            }
            if axes.iter().any(|a| a.2 == 0 || !(a.1 >= a.0)) {
                return Err(Error::Config("explicit grid axes need lo <= hi and count >= 1".into()));
            }
            let ax: Vec<Vec<f64>> = axes.iter().map(|&(lo, hi, n)| linspace(lo, hi, n)).collect();
            (ax, Vec::new(), Vec::new())
        }
        GridSpec::ModeCentered { nodes_per_dim, half_width_sd, tol, max_sweeps } => {
            if *nodes_per_dim == 0 || !(*half_width_sd > 0.0) {
                return Err(Error::Config("mode-centred grid needs nodes_per_dim >= 1 and half_width_sd > 0".into()));
            }
            let mode = find_mode(model, &model.layout.prior_mean, *tol, *max_sweeps)?;
            let sd = laplace_sd(model, &mode, 0.02);
            let ax = mode
                .iter()
                .zip(&sd)
                .map(|(m, s)| linspace(m - half_width_sd * s, m + half_width_sd * s, *nodes_per_dim))
                .collect();
            (ax, mode, sd)
        }
    };
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for ax in &axes {
        points = points.into_iter().flat_map(|p| ax.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    let evals: Vec<(f64, f64)> = points
        .par_iter()
        .map(|t| match condition(model, t) {
            Ok(p) => (p.log_marginal, p.log_prior),
            Err(_) => (f64::NEG_INFINITY, model.layout.log_prior(t)),
        })
        .collect();
    let log_w: Vec<f64> = evals.iter().map(|(a, b)| a + b).collect();
    let w = normalize_log_weights(&log_w)?;
    let nodes = points
        .into_iter()
        .zip(evals)
        .zip(w)
        .map(|((theta, (lm, lp)), weight)| ThetaNode { theta, log_marginal: lm, log_prior: lp, log_weight: lm + lp, weight })
        .collect();
    Ok(HyperPosterior { names: model.layout.names.clone(), nodes, axes, mode, laplace_sd: sd })
}

impl HyperPosterior {
    /// Weighted mean and standard deviation of each θ coordinate.
    pub fn theta_mean_sd(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.names.len();
        let mut mean = vec![0.0; dim];
        for n in &self.nodes {
            for d in 0..dim {
                mean[d] += n.weight * n.theta[d];
            }
        }
        let mut var = vec![0.0; dim];
        for n in &self.nodes {
            for d in 0..dim {
                var[d] += n.weight * (n.theta[d] - mean[d]).powi(2);
            }
        }
        (mean, var.into_iter().map(f64::sqrt).collect())
    }

    /// Marginal weight of each axis value of dimension `d`.
    pub fn marginal(&self, d: usize) -> Vec<(f64, f64)> {
        self.axes[d]
            .iter()
            .map(|&v| (v, self.nodes.iter().filter(|n| n.theta[d] == v).map(|n| n.weight).sum()))
            .collect()
    }

    /// Node table: one row per node with θ, log marginal, log prior, weight.
    pub fn write_node_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut s = String::new();
        s.push_str(&self.names.join(","));
        if !self.names.is_empty() {
            s.push(',');
        }
        s.push_str("log_marginal,log_prior,weight\n");
        for n in &self.nodes {
            for t in &n.theta {
                s.push_str(&format!("{t:.17e},"));
            }
            s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", n.log_marginal, n.log_prior, n.weight));
        }
        out.write_all(s.as_bytes())
    }
}
