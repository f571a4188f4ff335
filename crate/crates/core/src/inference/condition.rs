use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::HyperParams;
use crate::geometry::Point3;
use crate::model::HierModel;
use crate::sparse::{sparse_dot, Cholesky, SparseSymMatrix};

/// Gaussian posterior of the basis weights W given θ.
#[derive(Debug, Clone)]
pub struct ConditionalPosterior {
    pub theta: Vec<f64>,
    pub params: HyperParams,
    pub q_post: SparseSymMatrix,
    pub factor: Cholesky,
    pub mu: Vec<f64>,
    pub log_marginal: f64,
    pub log_prior: f64,
    /// Largest diagonal jitter applied in either factorization.
    pub jitter: f64,
}

impl ConditionalPosterior {
    pub fn log_weight(&self) -> f64 {
        self.log_marginal + self.log_prior
    }
}

fn theta_label(theta: &[f64], params: &HyperParams) -> String {
    let p: Vec<String> = params.regions.iter().map(|(r, m)| format!("{r}:(sigma={:.6e}, rho={:.6e})", m.sigma, m.rho)).collect();
    format!("{theta:?} [{}]", p.join(", "))
}

fn numerical(theta: &[f64], params: &HyperParams, e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Numerical {
            theta: theta_label(theta, params),
            reason: format!("Cholesky failed at pivot {pivot} (value {value:e})"),
        },
        other => other,
    }
}

/// Conditions on the model's adjusted observations at the free-parameter
/// point `theta` (log σ / log ρ coordinates of the model layout).
pub fn condition(model: &HierModel, theta: &[f64]) -> Result<ConditionalPosterior> {
    if theta.len() != model.layout.dim() {
        return Err(Error::InvalidArgument(format!("theta has {} entries, layout needs {}", theta.len(), model.layout.dim())));
    }
    let params = model.layout.hyper(theta);
    let mut post = condition_params(model, &params)?;
    post.theta = theta.to_vec();
    post.log_prior = model.layout.log_prior(theta);
    Ok(post)
}

/// Conditioning for explicit per-region parameters (log prior left at 0).
pub fn condition_params(model: &HierModel, params: &HyperParams) -> Result<ConditionalPosterior> {
    params.validate()?;
    let q_w = model.prior_precision(params)?;
    let fw = Cholesky::factor(model.prior_symbolic(), &q_w).map_err(|e| numerical(&[], params, e))?;
    let n = model.num_observations();
    if n == 0 {
        let k = model.num_vertices();
        return Ok(ConditionalPosterior {
            theta: Vec::new(),
            params: params.clone(),
            jitter: fw.jitter(),
            q_post: q_w,
            factor: fw,
            mu: vec![0.0; k],
            log_marginal: 0.0,
            log_prior: 0.0,
        });
    }
    let q_post = model.posterior_precision(&q_w);
    let fp = Cholesky::factor(model.posterior_symbolic(), &q_post).map_err(|e| numerical(&[], params, e))?;
    let qy_y: Vec<f64> = model.y_tilde.iter().zip(&model.q_y).map(|(y, q)| y * q).collect();
    let b = model.a.transpose_mul_vec(&qy_y);
    let mu = fp.solve(&b);
    let yqy: f64 = model.y_tilde.iter().zip(&qy_y).map(|(y, q)| y * q).sum();
    let bmu: f64 = b.iter().zip(&mu).map(|(a, c)| a * c).sum();
    let logdet_qy: f64 = model.q_y.iter().map(|q| q.ln()).sum();
    let log_marginal =
        0.5 * (fw.log_det() + logdet_qy - fp.log_det() - yqy + bmu) - 0.5 * n as f64 * (2.0 * PI).ln();
    if !log_marginal.is_finite() {
        return Err(Error::Numerical { theta: theta_label(&[], params), reason: "non-finite log marginal likelihood".into() });
    }
    Ok(ConditionalPosterior {
        theta: Vec::new(),
        params: params.clone(),
        jitter: fw.jitter().max(fp.jitter()),
        q_post,
        factor: fp,
        mu,
        log_marginal,
        log_prior: 0.0,
    })
}

/// Prior correlation of the field at two points under `params`.
pub fn correlation(model: &HierModel, params: &HyperParams, a: &Point3, b: &Point3) -> Result<f64> {
    let q_w = model.prior_precision(params)?;
    let f = Cholesky::factor(model.prior_symbolic(), &q_w).map_err(|e| numerical(&[], params, e))?;
    correlation_with(model, &f, a, b)
}

/// Correlation from an existing factor of a precision matrix.
pub fn correlation_with(model: &HierModel, factor: &Cholesky, a: &Point3, b: &Point3) -> Result<f64> {
    let row = |p: &Point3, i: usize| {
        model
            .point_row(p)
            .ok_or_else(|| Error::OutOfDomain { what: "correlation point outside the model mesh".into(), indices: vec![i] })
    };
    let (ra, rb) = (row(a, 0)?, row(b, 1)?);
    let mut w = factor.workspace();
    let (ua, ub) = (factor.half_solve_sparse(&ra, &mut w), factor.half_solve_sparse(&rb, &mut w));
    let cov = sparse_dot(&ua, &ub);
    let va = sparse_dot(&ua, &ua);
    let vb = sparse_dot(&ub, &ub);
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Prior marginal standard deviations at every vertex.
pub fn prior_vertex_sd(model: &HierModel, params: &HyperParams) -> Result<Vec<f64>> {
    let q_w = model.prior_precision(params)?;
    let f = Cholesky::factor(model.prior_symbolic(), &q_w).map_err(|e| numerical(&[], params, e))?;
    let mut w = f.workspace();
    Ok((0..model.num_vertices()).map(|j| f.quad_form_sparse(&[(j, 1.0)], &mut w).sqrt()).collect())
}
