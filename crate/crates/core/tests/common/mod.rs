//! Independent reference computations for integration tests. Nothing here
//! calls the library's density, transform or gradient code; only shapes and
//! layouts are shared.
#![allow(dead_code)]

use rand::Rng;
use vpmix::data::{Column, Dataset};
use vpmix::model::{FeatureKind, FeatureParams, FeatureSpec, MixtureSpec, ParamLayout, PriorSpec, ThetaCon};

/// Stirling series for ln Gamma after shifting the argument above 12.
pub fn ln_gamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    let s = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2) - 1.0 / (1680.0 * x * x2 * x2 * x2);
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + s
}

/// Asymptotic digamma after the recurrence `psi(x) = psi(x + 1) - 1/x`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 / 240.0)))
}

pub fn feature_logpdf(p: &FeatureParams, col: &Column, r: usize) -> f64 {
    match (p, col) {
        (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
            let x = v[r];
            (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(*a) - ln_gamma(*b)
        }
        (FeatureParams::Categorical(w), Column::Categorical(v)) => w[v[r] as usize].ln(),
        _ => panic!("kind mismatch"),
    }
}

/// `ln F_k(x_r)` for every component.
pub fn component_logpdf(spec: &MixtureSpec, theta: &ThetaCon, data: &Dataset, r: usize) -> Vec<f64> {
    (0..spec.k).map(|k| (0..spec.features.len()).map(|f| feature_logpdf(&theta.params[k][f], &data.columns[f], r)).sum()).collect()
}

pub fn log_likelihood(spec: &MixtureSpec, theta: &ThetaCon, data: &Dataset) -> f64 {
    (0..data.n_rows)
        .map(|r| {
            let lf = component_logpdf(spec, theta, data, r);
            let m = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + lf.iter().zip(&theta.pi).map(|(l, p)| p * (l - m).exp()).sum::<f64>().ln()
        })
        .sum()
}

/// Per-example likelihood gradient in the constrained layout, written out
/// directly: `GP_k = F_k / den` and `resp_k * d ln F / d rho`.
pub fn per_example_gradient(spec: &MixtureSpec, layout: &ParamLayout, theta: &ThetaCon, data: &Dataset, r: usize) -> Vec<f64> {
    let lf = component_logpdf(spec, theta, data, r);
    let m = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = lf.iter().map(|l| (l - m).exp()).collect();
    let den: f64 = f.iter().zip(&theta.pi).map(|(a, p)| a * p).sum();
    let mut g = vec![0.0; layout.con_len];
    for k in 0..spec.k {
        // GP carries e^m in both numerator and denominator after rescaling
        g[k] = f[k] / den;
        let resp = theta.pi[k] * f[k] / den;
        for (fi, _) in spec.features.iter().enumerate() {
            let off = layout.block(k, fi).con_offset;
            match (&theta.params[k][fi], &data.columns[fi]) {
                (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
                    let x = v[r];
                    let s = digamma(a + b);
                    g[off] = resp * (x.ln() - digamma(*a) + s);
                    g[off + 1] = resp * ((1.0 - x).ln() - digamma(*b) + s);
                }
                (FeatureParams::Categorical(w), Column::Categorical(v)) => {
                    let c = v[r] as usize;
                    g[off + c] = resp / w[c];
                }
                _ => panic!("kind mismatch"),
            }
        }
    }
    g
}

/// Constrained parameters as one flat vector in the layout order.
pub fn theta_to_vec(spec: &MixtureSpec, layout: &ParamLayout, theta: &ThetaCon) -> Vec<f64> {
    let mut v = vec![0.0; layout.con_len];
    v[..spec.k].copy_from_slice(&theta.pi);
    for k in 0..spec.k {
        for f in 0..spec.features.len() {
            let off = layout.block(k, f).con_offset;
            match &theta.params[k][f] {
                FeatureParams::Beta { a, b } => {
                    v[off] = *a;
                    v[off + 1] = *b;
                }
                FeatureParams::Categorical(w) => v[off..off + w.len()].copy_from_slice(w),
            }
        }
    }
    v
}

pub fn theta_from_vec(spec: &MixtureSpec, layout: &ParamLayout, v: &[f64]) -> ThetaCon {
    let params = (0..spec.k)
        .map(|k| {
            spec.features
                .iter()
                .enumerate()
                .map(|(f, fs)| {
                    let off = layout.block(k, f).con_offset;
                    match fs.kind {
                        FeatureKind::ContinuousBeta => FeatureParams::Beta { a: v[off], b: v[off + 1] },
                        FeatureKind::Categorical { n_categories } => FeatureParams::Categorical(v[off..off + n_categories].to_vec()),
                    }
                })
                .collect()
        })
        .collect();
    ThetaCon { pi: v[..spec.k].to_vec(), params }
}

/// Centred stick-breaking and its log Jacobian determinant.
pub fn stick_breaking(y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len() + 1;
    let mut x = Vec::with_capacity(n);
    let mut stick = 1.0;
    let mut logdet = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        let z = 1.0 / (1.0 + (-(yj - ((n - 1 - j) as f64).ln())).exp());
        // d x_j / d y_j, with the Jacobian lower triangular
        logdet += (stick * z * (1.0 - z)).ln();
        x.push(stick * z);
        stick -= stick * z;
    }
    x.push(stick);
    (x, logdet)
}

/// Unconstrained vector to constrained parameters, plus the log Jacobian.
pub fn constrain(spec: &MixtureSpec, layout: &ParamLayout, u: &[f64]) -> (ThetaCon, f64) {
    let (pi, mut logdet) = stick_breaking(&u[..spec.k - 1]);
    let params = (0..spec.k)
        .map(|k| {
            spec.features
                .iter()
                .enumerate()
                .map(|(f, fs)| {
                    let off = layout.block(k, f).uncon_offset;
                    match fs.kind {
                        FeatureKind::ContinuousBeta => {
                            logdet += u[off] + u[off + 1];
                            FeatureParams::Beta { a: u[off].exp(), b: u[off + 1].exp() }
                        }
                        FeatureKind::Categorical { n_categories } => {
                            let (w, ld) = stick_breaking(&u[off..off + n_categories - 1]);
                            logdet += ld;
                            FeatureParams::Categorical(w)
                        }
                    }
                })
                .collect()
        })
        .collect();
    (ThetaCon { pi, params }, logdet)
}

/// Dirichlet and Gamma log densities with normalizers.
pub fn log_prior(spec: &MixtureSpec, theta: &ThetaCon) -> f64 {
    let pr = &spec.priors;
    let dir = |x: &[f64], a: f64| {
        let n = x.len() as f64;
        ln_gamma(n * a) - n * ln_gamma(a) + (a - 1.0) * x.iter().map(|v| v.ln()).sum::<f64>()
    };
    let gamma = |x: f64| pr.gamma_shape * pr.gamma_rate.ln() - ln_gamma(pr.gamma_shape) + (pr.gamma_shape - 1.0) * x.ln() - pr.gamma_rate * x;
    let mut lp = dir(&theta.pi, pr.alpha);
    for comp in &theta.params {
        for p in comp {
            lp += match p {
                FeatureParams::Beta { a, b } => gamma(*a) + gamma(*b),
                FeatureParams::Categorical(w) => dir(w, pr.beta),
            };
        }
    }
    lp
}

pub fn random_spec<R: Rng>(rng: &mut R, max_k: usize) -> MixtureSpec {
    let k = rng.random_range(1..=max_k);
    let parties = rng.random_range(1..=3);
    let mut features = Vec::new();
    for p in 0..parties {
        for _ in 0..rng.random_range(1..=2) {
            let kind = if rng.random_bool(0.5) {
                FeatureKind::ContinuousBeta
            } else {
                FeatureKind::Categorical { n_categories: rng.random_range(2..=4) }
            };
            features.push(FeatureSpec { name: format!("f{}", features.len()), kind, party: p });
        }
    }
    let priors = PriorSpec {
        alpha: rng.random_range(0.5..3.0),
        beta: rng.random_range(0.5..3.0),
        gamma_shape: rng.random_range(0.5..3.0),
        gamma_rate: rng.random_range(0.5..2.0),
    };
    MixtureSpec { k, features, priors }
}

pub fn random_theta<R: Rng>(spec: &MixtureSpec, rng: &mut R) -> ThetaCon {
    let simplex = |n: usize, rng: &mut R| {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let pi = simplex(spec.k, rng);
    let params = (0..spec.k)
        .map(|_| {
            spec.features
                .iter()
                .map(|f| match f.kind {
                    FeatureKind::ContinuousBeta => FeatureParams::Beta { a: rng.random_range(0.5..4.0), b: rng.random_range(0.5..4.0) },
                    FeatureKind::Categorical { n_categories } => FeatureParams::Categorical(simplex(n_categories, rng)),
                })
                .collect()
        })
        .collect();
    ThetaCon { pi, params }
}

pub fn random_data<R: Rng>(spec: &MixtureSpec, n: usize, rng: &mut R) -> Dataset {
    let cols = spec
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::ContinuousBeta => Column::Continuous((0..n).map(|_| rng.random_range(0.02..0.98)).collect()),
            FeatureKind::Categorical { n_categories } => Column::Categorical((0..n).map(|_| rng.random_range(0..n_categories as u32)).collect()),
        })
        .collect();
    Dataset::new(cols).unwrap()
}

/// `||a - b|| / ||b||`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let dn = f(&p);
            p[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}
