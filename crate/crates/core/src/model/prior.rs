use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{HyperParams, MaternParams};
use crate::geometry::RegionId;

/// Log-normal belief about a positive quantity, given by its mean and
/// coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub mean: f64,
    pub cv: f64,
}

impl LogNormalSpec {
    /// Mean and variance of the underlying normal:
    /// s² = log(1 + cv²), m = log E − s²/2.
    pub fn log_moments(&self) -> Result<(f64, f64)> {
        if !(self.cv > 0.0) {
            return Err(Error::InvalidArgument(format!("coefficient of variation must be positive, got {}", self.cv)));
        }
        if !(self.mean > 0.0) {
            return Err(Error::InvalidArgument(format!("prior mean must be positive, got {}", self.mean)));
        }
        let var = self.cv.powi(2).ln_1p();
        Ok((self.mean.ln() - 0.5 * var, var))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPrior {
    pub sigma: LogNormalSpec,
    pub rho: LogNormalSpec,
}

impl RegionPrior {
    pub fn new(mean_sigma: f64, mean_rho: f64, cv: f64) -> Self {
        Self { sigma: LogNormalSpec { mean: mean_sigma, cv }, rho: LogNormalSpec { mean: mean_rho, cv } }
    }
}

/// Hyperprior specification with optional per-region overrides and fixed
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub default: RegionPrior,
    #[serde(default)]
    pub regions: BTreeMap<RegionId, RegionPrior>,
    #[serde(default)]
    pub fixed_sigma: BTreeMap<RegionId, f64>,
    #[serde(default)]
    pub fixed_rho: BTreeMap<RegionId, f64>,
}

impl PriorSpec {
    pub fn new(default: RegionPrior) -> Self {
        Self { default, regions: BTreeMap::new(), fixed_sigma: BTreeMap::new(), fixed_rho: BTreeMap::new() }
    }

    pub fn for_region(&self, r: RegionId) -> RegionPrior {
        self.regions.get(&r).copied().unwrap_or(self.default)
    }
}

/// Gaussian prior on θ = (log σ, log ρ) with the affine map to (log κ, log τ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPrior {
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub offset: [f64; 2],
    pub matrix: [[f64; 2]; 2],
}

/// (log κ, log τ) = ½(log 8, −log 4π − log 8) + [[0, −1], [−1, 1]] (log σ, log ρ).
pub fn affine_map() -> ([f64; 2], [[f64; 2]; 2]) {
    let l8 = 8.0_f64.ln();
    ([0.5 * l8, -0.5 * ((4.0 * PI).ln() + l8)], [[0.0, -1.0], [-1.0, 1.0]])
}

pub fn build_prior(spec: &RegionPrior) -> Result<HyperPrior> {
    let (m1, v1) = spec.sigma.log_moments()?;
    let (m2, v2) = spec.rho.log_moments()?;
    let (offset, matrix) = affine_map();
    Ok(HyperPrior { mean: [m1, m2], var: [v1, v2], offset, matrix })
}

impl HyperPrior {
    pub fn log_kappa_tau(&self, theta: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            self.offset[0] + m[0][0] * theta[0] + m[0][1] * theta[1],
            self.offset[1] + m[1][0] * theta[0] + m[1][1] * theta[1],
        ]
    }
}

/// Where a region's parameter comes from: a coordinate of the free θ vector
/// (in log units) or a fixed value (natural units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Free(usize),
    Fixed(f64),
}

/// Mapping between the free vector θ and per-region (σ, ρ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub regions: Vec<(RegionId, Source, Source)>,
    pub names: Vec<String>,
    pub prior_mean: Vec<f64>,
    pub prior_var: Vec<f64>,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Per-region parameters for a point θ (log σ / log ρ coordinates).
    pub fn hyper(&self, theta: &[f64]) -> HyperParams {
        let get = |s: Source| match s {
            Source::Free(i) => theta[i].exp(),
            Source::Fixed(v) => v,
        };
        HyperParams {
            regions: self.regions.iter().map(|&(r, s, p)| (r, MaternParams::new(get(s), get(p)))).collect(),
        }
    }

    /// Log prior density of θ (independent Gaussians).
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.prior_mean.iter().zip(&self.prior_var))
            .map(|(t, (m, v))| -0.5 * ((t - m).powi(2) / v + (2.0 * PI * v).ln()))
            .sum()
    }

    /// Whether coordinate `d` is a log σ (true) or log ρ (false).
    pub fn is_sigma(&self, d: usize) -> bool {
        self.names[d].starts_with("log_sigma")
    }

    /// Layout where every region of `groups[g]` shares the free pair of
    /// group g, unless fixed in `spec`. The prior of a group is that of its
    /// first region.
    pub fn grouped(spec: &PriorSpec, sigma_groups: &[Vec<RegionId>], rho_groups: &[Vec<RegionId>]) -> Result<Self> {
        let mut names = Vec::new();
        let mut prior_mean = Vec::new();
        let mut prior_var = Vec::new();
        let mut sigma_of: BTreeMap<RegionId, Source> = BTreeMap::new();
        let mut rho_of: BTreeMap<RegionId, Source> = BTreeMap::new();
        for (which, groups) in [(0, sigma_groups), (1, rho_groups)] {
            for group in groups {
                let free: Vec<RegionId> = group
                    .iter()
                    .copied()
                    .filter(|r| if which == 0 { !spec.fixed_sigma.contains_key(r) } else { !spec.fixed_rho.contains_key(r) })
                    .collect();
                for &r in group {
                    let fixed = if which == 0 { spec.fixed_sigma.get(&r) } else { spec.fixed_rho.get(&r) };
                    let src = match fixed {
                        Some(&v) => {
                            if !(v > 0.0) {
                                return Err(Error::Config(format!("fixed value for region {r} must be positive")));
                            }
                            Source::Fixed(v)
                        }
                        None => Source::Free(names.len()),
                    };
                    if which == 0 {
                        sigma_of.insert(r, src);
                    } else {
                        rho_of.insert(r, src);
                    }
                }
                if let Some(&first) = free.first() {
                    let rp = spec.for_region(first);
                    let (m, v) = if which == 0 { rp.sigma.log_moments()? } else { rp.rho.log_moments()? };
                    let label = free.iter().map(|r| r.0.to_string()).collect::<Vec<_>>().join("_");
                    names.push(format!("{}_{}", if which == 0 { "log_sigma" } else { "log_rho" }, label));
                    prior_mean.push(m);
                    prior_var.push(v);
                }
            }
        }
        let regions = sigma_of
            .iter()
            .map(|(r, s)| {
                let p = rho_of.get(r).copied().ok_or_else(|| Error::Config(format!("region {r} has no range parameter")))?;
                Ok((*r, *s, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { regions, names, prior_mean, prior_var })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{convert_params, params_from_kappa_tau};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments_for_cv_two() {
        let p = build_prior(&RegionPrior::new(1.5, 1000.0 / 6371.0, 2.0)).unwrap();
        assert!((p.mean[0] - (1.5_f64.ln() - 5.0_f64.sqrt().ln())).abs() < 1e-15);
        assert!((p.var[0] - 5.0_f64.ln()).abs() < 1e-15);
        assert!((p.mean[1] - ((1000.0_f64 / 6371.0).ln() - 5.0_f64.sqrt().ln())).abs() < 1e-15);
        let (_, m) = affine_map();
        assert_eq!(m, [[0.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn small_cv_limit() {
        let s = LogNormalSpec { mean: 2.0, cv: 1e-6 };
        let (m, v) = s.log_moments().unwrap();
        assert!(v < 1e-11);
        assert!((m - 2.0_f64.ln()).abs() < 1e-11);
        assert!(LogNormalSpec { mean: 2.0, cv: 0.0 }.log_moments().is_err());
    }

    #[test]
    fn affine_map_agrees_with_conversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = build_prior(&RegionPrior::new(1.0, 1.0, 2.0)).unwrap();
        for _ in 0..100 {
            let (s, r): (f64, f64) = (rng.random_range(0.01..10.0), rng.random_range(0.01..10.0));
            let [lk, lt] = p.log_kappa_tau([s.ln(), r.ln()]);
            let (k, t) = convert_params(s, r).unwrap();
            assert!((lk - k.ln()).abs() < 1e-13 && (lt - t.ln()).abs() < 1e-13);
            let (s2, r2) = params_from_kappa_tau(lk.exp(), lt.exp()).unwrap();
            assert!((s2 - s).abs() < 1e-12 * s && (r2 - r).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn monte_carlo_recovers_lognormal_moments() {
        // Stratified draws: one uniform per stratum [i/n, (i+1)/n).
        let (m, v) = LogNormalSpec { mean: 1.5, cv: 2.0 }.log_moments().unwrap();
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|i| {
                let u = (i as f64 + rng.random::<f64>()) / n as f64;
                (m + v.sqrt() * statrs::distribution::ContinuousCDF::inverse_cdf(&normal, u)).exp()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 1.5).abs() < 0.01 * 1.5, "mean {mean}");
        assert!((sd / mean - 2.0).abs() < 0.01 * 2.0, "cv {}", sd / mean);
    }

    #[test]
    fn grouped_layout_with_fixed_rho() {
        let mut spec = PriorSpec::new(RegionPrior::new(1.5, 0.16, 2.0));
        spec.fixed_rho.insert(RegionId(0), std::f64::consts::PI);
        let layout =
            ParamLayout::grouped(&spec, &[vec![RegionId(0), RegionId(1)]], &[vec![RegionId(0)], vec![RegionId(1)]]).unwrap();
        assert_eq!(layout.dim(), 2);
        let h = layout.hyper(&[0.0, (0.2_f64).ln()]);
        assert_eq!(h.get(RegionId(0)).unwrap().rho, std::f64::consts::PI);
        assert_eq!(h.get(RegionId(0)).unwrap().sigma, 1.0);
        assert!((h.get(RegionId(1)).unwrap().rho - 0.2).abs() < 1e-15);
    }
}
