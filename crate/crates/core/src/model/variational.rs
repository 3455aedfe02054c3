//! Mean-field Gaussian posterior in the unconstrained space, its
//! reparameterized samples, and the public (prior and entropy) gradient terms.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::transform::{stick_breaking, stick_breaking_pullback, StickBreak};
use super::{FeatureKind, FeatureParams, MixtureSpec, ModelError, ParamLayout, Result, ThetaCon};

/// `theta = mu + l * eta` with diagonal scale `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub l: Vec<f64>,
}

impl VariationalParams {
    /// `mu ~ N(0, init_std^2)` elementwise (zero when `init_std == 0`), `l = scale`.
    pub fn init<R: Rng + ?Sized>(layout: &ParamLayout, init_std: f64, scale: f64, rng: &mut R) -> Self {
        let mu = (0..layout.uncon_len)
            .map(|_| if init_std > 0.0 { init_std * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
            .collect();
        VariationalParams { mu, l: vec![scale; layout.uncon_len] }
    }

    pub fn validate(&self, layout: &ParamLayout) -> Result<()> {
        if self.mu.len() != layout.uncon_len || self.l.len() != layout.uncon_len {
            return Err(ModelError::Dimension { expected: layout.uncon_len, actual: self.mu.len().min(self.l.len()) });
        }
        if !self.mu.iter().all(|v| v.is_finite()) || !self.l.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(ModelError::InvalidSpec("variational scale must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Constrained parameters with everything needed to pull gradients back.
#[derive(Clone, Debug)]
pub struct Constrained {
    pub theta: ThetaCon,
    pub logdet: f64,
    /// Gradient of `logdet` in the unconstrained layout.
    pub logdet_grad: Vec<f64>,
    pi_map: StickBreak,
    /// Stick-breaking maps of categorical blocks, indexed like `layout.blocks`.
    block_maps: Vec<Option<StickBreak>>,
}

#[derive(Clone, Debug)]
pub struct ThetaSample {
    pub eta: Vec<f64>,
    pub theta_uncon: Vec<f64>,
    pub con: Constrained,
}

pub fn constrain(spec: &MixtureSpec, layout: &ParamLayout, uncon: &[f64]) -> Result<Constrained> {
    if uncon.len() != layout.uncon_len {
        return Err(ModelError::Dimension { expected: layout.uncon_len, actual: uncon.len() });
    }
    let k = spec.k;
    let mut logdet_grad = vec![0.0; layout.uncon_len];
    let pi_map = stick_breaking(&uncon[..k - 1]);
    let mut logdet = pi_map.logdet;
    logdet_grad[..k - 1].copy_from_slice(&pi_map.logdet_grad);
    let mut params: Vec<Vec<Option<FeatureParams>>> = vec![vec![None; spec.features.len()]; k];
    let mut block_maps = Vec::with_capacity(layout.blocks.len());
    for b in &layout.blocks {
        let u = b.uncon_offset;
        match b.kind {
            FeatureKind::ContinuousBeta => {
                logdet += uncon[u] + uncon[u + 1];
                logdet_grad[u] = 1.0;
                logdet_grad[u + 1] = 1.0;
                params[b.component][b.feature] = Some(FeatureParams::Beta { a: uncon[u].exp(), b: uncon[u + 1].exp() });
                block_maps.push(None);
            }
            FeatureKind::Categorical { n_categories } => {
                let sb = stick_breaking(&uncon[u..u + n_categories - 1]);
                logdet += sb.logdet;
                logdet_grad[u..u + n_categories - 1].copy_from_slice(&sb.logdet_grad);
                params[b.component][b.feature] = Some(FeatureParams::Categorical(sb.x.clone()));
                block_maps.push(Some(sb));
            }
        }
    }
    let params = params.into_iter().map(|row| row.into_iter().map(|p| p.expect("every block filled")).collect()).collect();
    Ok(Constrained { theta: ThetaCon { pi: pi_map.x.clone(), params }, logdet, logdet_grad, pi_map, block_maps })
}

/// Maps a constrained-layout gradient to the unconstrained layout.
pub fn pullback(layout: &ParamLayout, con: &Constrained, g_con: &[f64]) -> Result<Vec<f64>> {
    if g_con.len() != layout.con_len {
        return Err(ModelError::Dimension { expected: layout.con_len, actual: g_con.len() });
    }
    let k = layout.k;
    let mut g = vec![0.0; layout.uncon_len];
    g[..k - 1].copy_from_slice(&stick_breaking_pullback(&con.pi_map, &g_con[..k]));
    for (b, map) in layout.blocks.iter().zip(&con.block_maps) {
        let (c, u) = (b.con_offset, b.uncon_offset);
        match (&con.theta.params[b.component][b.feature], map) {
            (FeatureParams::Beta { a, b: bb }, _) => {
                g[u] = g_con[c] * a;
                g[u + 1] = g_con[c + 1] * bb;
            }
            (FeatureParams::Categorical(w), Some(sb)) => {
                let gy = stick_breaking_pullback(sb, &g_con[c..c + w.len()]);
                g[u..u + gy.len()].copy_from_slice(&gy);
            }
            (FeatureParams::Categorical(_), None) => unreachable!("categorical blocks carry their map"),
        }
    }
    Ok(g)
}

pub fn sample_theta<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    xi: &VariationalParams,
    rng: &mut R,
) -> Result<ThetaSample> {
    xi.validate(layout)?;
    let eta: Vec<f64> = (0..layout.uncon_len).map(|_| rng.sample(StandardNormal)).collect();
    let theta_uncon: Vec<f64> = xi.mu.iter().zip(&xi.l).zip(&eta).map(|((m, l), e)| m + l * e).collect();
    let con = constrain(spec, layout, &theta_uncon)?;
    Ok(ThetaSample { eta, theta_uncon, con })
}

fn ln_dirichlet(x: &[f64], conc: f64) -> f64 {
    let n = x.len() as f64;
    ln_gamma(n * conc) - n * ln_gamma(conc) + (conc - 1.0) * x.iter().map(|v| v.ln()).sum::<f64>()
}

/// Normalized log prior density of the constrained parameters.
pub fn log_prior(spec: &MixtureSpec, theta: &ThetaCon) -> f64 {
    let pr = &spec.priors;
    let mut lp = ln_dirichlet(&theta.pi, pr.alpha);
    let gamma = |a: f64| pr.gamma_shape * pr.gamma_rate.ln() - ln_gamma(pr.gamma_shape) + (pr.gamma_shape - 1.0) * a.ln() - pr.gamma_rate * a;
    for row in &theta.params {
        for p in row {
            lp += match p {
                FeatureParams::Beta { a, b } => gamma(*a) + gamma(*b),
                FeatureParams::Categorical(w) => ln_dirichlet(w, pr.beta),
            };
        }
    }
    lp
}

/// Gradient of [`log_prior`] in the constrained layout.
pub fn prior_grad_con(spec: &MixtureSpec, layout: &ParamLayout, theta: &ThetaCon) -> Vec<f64> {
    let pr = &spec.priors;
    let mut g = vec![0.0; layout.con_len];
    for (gk, p) in g.iter_mut().zip(&theta.pi) {
        *gk = (pr.alpha - 1.0) / p;
    }
    for b in &layout.blocks {
        let c = b.con_offset;
        match &theta.params[b.component][b.feature] {
            FeatureParams::Beta { a, b: bb } => {
                g[c] = (pr.gamma_shape - 1.0) / a - pr.gamma_rate;
                g[c + 1] = (pr.gamma_shape - 1.0) / bb - pr.gamma_rate;
            }
            FeatureParams::Categorical(w) => {
                for (j, wj) in w.iter().enumerate() {
                    g[c + j] = (pr.beta - 1.0) / wj;
                }
            }
        }
    }
    g
}

/// ELBO gradient with respect to `(mu, l)` given a constrained-layout
/// likelihood gradient: prior and likelihood are pulled back through the
/// transform, the log-Jacobian gradient is added, and the chain to `mu`
/// (identity) and `l` (times `eta`, plus `1/l` from the entropy) applied.
pub fn elbo_gradient(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    sample: &ThetaSample,
    xi: &VariationalParams,
    g_lik_con: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if g_lik_con.len() != layout.con_len {
        return Err(ModelError::Dimension { expected: layout.con_len, actual: g_lik_con.len() });
    }
    let prior = prior_grad_con(spec, layout, &sample.con.theta);
    let total: Vec<f64> = g_lik_con.iter().zip(&prior).map(|(a, b)| a + b).collect();
    let mut g_theta = pullback(layout, &sample.con, &total)?;
    for (g, j) in g_theta.iter_mut().zip(&sample.con.logdet_grad) {
        *g += j;
    }
    let g_l = g_theta.iter().zip(&sample.eta).zip(&xi.l).map(|((g, e), l)| g * e + 1.0 / l).collect();
    Ok((g_theta, g_l))
}

/// Public part of the ELBO gradient: [`elbo_gradient`] with a zero likelihood term.
pub fn prior_entropy_grad(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    sample: &ThetaSample,
    xi: &VariationalParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    elbo_gradient(spec, layout, sample, xi, &vec![0.0; layout.con_len])
}
