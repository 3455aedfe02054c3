//! Component log-densities, their log-derivatives, and plaintext likelihoods.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use super::{FeatureKind, FeatureParams, MixtureSpec, ModelError, ParamLayout, Result, ThetaCon};
use crate::data::{Column, Dataset, PartyBlock};

/// Smallest and largest continuous value produced by sampling or ingestion.
pub const BETA_NUDGE: f64 = 1e-6;

fn feature_logpdf(params: &FeatureParams, col: &Column, row: usize) -> f64 {
    match (params, col) {
        (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
            let x = v[row];
            (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(*a, *b)
        }
        (FeatureParams::Categorical(w), Column::Categorical(v)) => w[v[row] as usize].ln(),
        _ => unreachable!("columns are checked against the spec"),
    }
}

/// Writes `d log F / d params` into `out`.
fn feature_dlog(params: &FeatureParams, col: &Column, row: usize, out: &mut [f64]) {
    match (params, col) {
        (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
            let x = v[row];
            let ab = digamma(a + b);
            out[0] = x.ln() - digamma(*a) + ab;
            out[1] = (-x).ln_1p() - digamma(*b) + ab;
        }
        (FeatureParams::Categorical(w), Column::Categorical(v)) => {
            out.fill(0.0);
            let j = v[row] as usize;
            out[j] = 1.0 / w[j];
        }
        _ => unreachable!("columns are checked against the spec"),
    }
}

fn check_block(spec: &MixtureSpec, block: &PartyBlock) -> Result<()> {
    for (&f, c) in block.features.iter().zip(&block.columns) {
        let fs = spec.features.get(f).ok_or(ModelError::Dimension { expected: spec.features.len(), actual: f + 1 })?;
        c.check(&fs.name, fs.kind)?;
    }
    Ok(())
}

/// `LF[n, k] = log F_p(x_n^p | rho_k^p)` for the selected rows, row-major.
pub fn local_log_density(spec: &MixtureSpec, theta: &ThetaCon, block: &PartyBlock, rows: &[usize]) -> Result<Vec<f64>> {
    check_block(spec, block)?;
    let k = spec.k;
    let mut out = vec![0.0; rows.len() * k];
    for (i, &r) in rows.iter().enumerate() {
        for c in 0..k {
            out[i * k + c] =
                block.features.iter().zip(&block.columns).map(|(&f, col)| feature_logpdf(&theta.params[c][f], col, r)).sum();
        }
    }
    Ok(out)
}

/// `d LF[n, k] / d rho_k^p`, shape `rows x K x d_p`, with the party's
/// features in specification order.
pub fn local_dmat(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    theta: &ThetaCon,
    block: &PartyBlock,
    rows: &[usize],
) -> Result<Vec<f64>> {
    check_block(spec, block)?;
    let (k, d) = (spec.k, layout.party_dims[block.party]);
    let mut out = vec![0.0; rows.len() * k * d];
    for (i, &r) in rows.iter().enumerate() {
        for c in 0..k {
            let mut off = (i * k + c) * d;
            for (&f, col) in block.features.iter().zip(&block.columns) {
                let w = spec.features[f].kind.con_dims();
                feature_dlog(&theta.params[c][f], col, r, &mut out[off..off + w]);
                off += w;
            }
        }
    }
    Ok(out)
}

/// Smallest multiple `c` of `step` with `max_k LF[n, k] + c >= t`; zero when
/// the row already reaches `t`.
pub fn compute_normalizer(lf_row: &[f64], t: f64, step: f64) -> f64 {
    let m = lf_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() || m >= t {
        return 0.0;
    }
    let mut j = ((t - m) / step).ceil();
    // guard the rounding of the division at exact multiples
    if m + (j - 1.0) * step >= t {
        j -= 1.0;
    }
    if m + j * step < t {
        j += 1.0;
    }
    j * step
}

fn component_log_joint(theta: &ThetaCon, data: &Dataset, row: usize, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = data.columns.iter().enumerate().map(|(f, col)| feature_logpdf(&theta.params[c][f], col, row)).sum();
    }
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `sum_n log sum_k pi_k F(x_n | rho_k)`, evaluated with log-sum-exp.
pub fn log_likelihood(spec: &MixtureSpec, theta: &ThetaCon, data: &Dataset) -> Result<f64> {
    data.validate(spec)?;
    let mut lf = vec![0.0; spec.k];
    let mut total = 0.0;
    for r in 0..data.n_rows {
        component_log_joint(theta, data, r, &mut lf);
        total += log_sum_exp(lf.iter().zip(&theta.pi).map(|(l, p)| l + p.ln()));
    }
    Ok(total)
}

/// Average negative log-likelihood per row.
pub fn mean_nll(spec: &MixtureSpec, theta: &ThetaCon, data: &Dataset) -> Result<f64> {
    if data.n_rows == 0 {
        return Ok(0.0);
    }
    Ok(-log_likelihood(spec, theta, data)? / data.n_rows as f64)
}

/// Per-example likelihood gradients `[GP(n) | GR(n, 0) | ... ]` in the
/// constrained layout, computed in log space.
pub fn per_example_gradients(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    theta: &ThetaCon,
    data: &Dataset,
    rows: &[usize],
) -> Result<Vec<Vec<f64>>> {
    data.validate(spec)?;
    let k = spec.k;
    let mut lf = vec![0.0; k];
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        component_log_joint(theta, data, r, &mut lf);
        let lse = log_sum_exp(lf.iter().zip(&theta.pi).map(|(l, p)| l + p.ln()));
        let mut g = vec![0.0; layout.con_len];
        for c in 0..k {
            g[c] = (lf[c] - lse).exp();
        }
        for b in &layout.blocks {
            let resp = theta.pi[b.component] * g[b.component];
            let w = b.kind.con_dims();
            let slot = &mut g[b.con_offset..b.con_offset + w];
            feature_dlog(&theta.params[b.component][b.feature], &data.columns[b.feature], r, slot);
            slot.iter_mut().for_each(|v| *v *= resp);
        }
        out.push(g);
    }
    Ok(out)
}

/// Draws `n` rows from the mixture: a component per row, then every feature
/// from that component. Continuous draws are kept inside
/// `[BETA_NUDGE, 1 - BETA_NUDGE]`.
pub fn synthetic_dataset<R: Rng + ?Sized>(spec: &MixtureSpec, theta: &ThetaCon, n: usize, rng: &mut R) -> Result<Dataset> {
    let bad = |m: &str| ModelError::InvalidSpec(m.to_string());
    let z_dist = WeightedIndex::new(&theta.pi).map_err(|_| bad("mixing weights are not a distribution"))?;
    let z: Vec<usize> = (0..n).map(|_| z_dist.sample(rng)).collect();
    let mut columns = Vec::with_capacity(spec.features.len());
    for (f, fs) in spec.features.iter().enumerate() {
        columns.push(match fs.kind {
            FeatureKind::ContinuousBeta => {
                let dists = (0..spec.k)
                    .map(|c| match &theta.params[c][f] {
                        FeatureParams::Beta { a, b } => {
                            rand_distr::Beta::new(*a, *b).map_err(|_| bad("invalid Beta parameters"))
                        }
                        FeatureParams::Categorical(_) => Err(bad("parameter kind mismatch")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Column::Continuous(z.iter().map(|&c| dists[c].sample(rng).clamp(BETA_NUDGE, 1.0 - BETA_NUDGE)).collect())
            }
            FeatureKind::Categorical { .. } => {
                let dists = (0..spec.k)
                    .map(|c| match &theta.params[c][f] {
                        FeatureParams::Categorical(w) => {
                            WeightedIndex::new(w).map_err(|_| bad("invalid categorical probabilities"))
                        }
                        FeatureParams::Beta { .. } => Err(bad("parameter kind mismatch")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Column::Categorical(z.iter().map(|&c| dists[c].sample(rng) as u32).collect())
            }
        });
    }
    Dataset::new(columns)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{FeatureSpec, PriorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_theta<R: Rng>(spec: &MixtureSpec, rng: &mut R) -> ThetaCon {
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
                        FeatureKind::ContinuousBeta => {
                            FeatureParams::Beta { a: rng.random_range(0.5..4.0), b: rng.random_range(0.5..4.0) }
                        }
                        FeatureKind::Categorical { n_categories } => FeatureParams::Categorical(simplex(n_categories, rng)),
                    })
                    .collect()
            })
            .collect();
        ThetaCon { pi, params }
    }

    pub(crate) fn random_data<R: Rng>(spec: &MixtureSpec, n: usize, rng: &mut R) -> Dataset {
        let cols = spec
            .features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::ContinuousBeta => Column::Continuous((0..n).map(|_| rng.random_range(0.02..0.98)).collect()),
                FeatureKind::Categorical { n_categories } => {
                    Column::Categorical((0..n).map(|_| rng.random_range(0..n_categories as u32)).collect())
                }
            })
            .collect();
        Dataset::new(cols).unwrap()
    }

    pub(crate) fn random_spec<R: Rng>(rng: &mut R, max_k: usize) -> MixtureSpec {
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
        MixtureSpec { k, features, priors: PriorSpec::default() }
    }

    // Independent density oracle: Stirling series for ln Gamma after
    // shifting the argument above 10.
    fn ln_gamma_oracle(mut x: f64) -> f64 {
        let mut acc = 0.0;
        while x < 10.0 {
            acc -= x.ln();
            x += 1.0;
        }
        let x2 = x * x;
        let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2) - 1.0 / (1680.0 * x * x2 * x2 * x2)
            + 1.0 / (1188.0 * x * x2 * x2 * x2 * x2);
        acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
    }

    fn logpdf_oracle(p: &FeatureParams, col: &Column, r: usize) -> f64 {
        match (p, col) {
            (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
                let x = v[r];
                (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma_oracle(a + b) - ln_gamma_oracle(*a) - ln_gamma_oracle(*b)
            }
            (FeatureParams::Categorical(w), Column::Categorical(v)) => w[v[r] as usize].ln(),
            _ => unreachable!(),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn uniform_categorical_and_flat_beta() {
        let spec = MixtureSpec {
            k: 2,
            features: vec![
                FeatureSpec { name: "c".into(), kind: FeatureKind::Categorical { n_categories: 4 }, party: 0 },
                FeatureSpec { name: "x".into(), kind: FeatureKind::ContinuousBeta, party: 1 },
            ],
            priors: PriorSpec::default(),
        };
        let theta = ThetaCon {
            pi: vec![0.5, 0.5],
            params: vec![vec![FeatureParams::Categorical(vec![0.25; 4]), FeatureParams::Beta { a: 1.0, b: 1.0 }]; 2],
        };
        let data = Dataset::new(vec![Column::Categorical(vec![0, 3, 2]), Column::Continuous(vec![0.1, 0.5, 0.9])]).unwrap();
        let parts = data.partition(&spec).unwrap();
        let rows = data.all_rows();
        let lf0 = local_log_density(&spec, &theta, &parts.blocks[0], &rows).unwrap();
        assert!(lf0.iter().all(|v| (v - 0.25f64.ln()).abs() < 1e-15));
        let lf1 = local_log_density(&spec, &theta, &parts.blocks[1], &rows).unwrap();
        assert!(lf1.iter().all(|v| v.abs() < 1e-12));

        let layout = spec.layout();
        let d0 = local_dmat(&spec, &layout, &theta, &parts.blocks[0], &rows).unwrap();
        // row 1 observed category 3
        assert_eq!(&d0[8..12], &[0.0, 0.0, 0.0, 4.0]);
        // Beta(1,1) at 0.5: ln 0.5 - psi(1) + psi(2) = ln 0.5 + 1
        let d1 = local_dmat(&spec, &layout, &theta, &parts.blocks[1], &rows).unwrap();
        assert!((d1[4] - (0.5f64.ln() + 1.0)).abs() < 1e-12);
        assert!((d1[5] - (0.5f64.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let spec = MixtureSpec {
            k: 1,
            features: vec![
                FeatureSpec { name: "x".into(), kind: FeatureKind::ContinuousBeta, party: 0 },
                FeatureSpec { name: "c".into(), kind: FeatureKind::Categorical { n_categories: 2 }, party: 1 },
            ],
            priors: PriorSpec::default(),
        };
        let theta = ThetaCon {
            pi: vec![1.0],
            params: vec![vec![FeatureParams::Beta { a: 2.0, b: 2.0 }, FeatureParams::Categorical(vec![0.5, 0.5])]],
        };
        let bad_x = PartyBlock { party: 0, features: vec![0], columns: vec![Column::Continuous(vec![0.5, 1.5])] };
        assert!(matches!(
            local_log_density(&spec, &theta, &bad_x, &[0, 1]),
            Err(ModelError::Domain { row: 1, .. })
        ));
        let bad_c = PartyBlock { party: 1, features: vec![1], columns: vec![Column::Categorical(vec![2])] };
        assert!(matches!(
            local_log_density(&spec, &theta, &bad_c, &[0]),
            Err(ModelError::CategoryOutOfRange { value: 2, n: 2, .. })
        ));
    }

    #[test]
    fn log_density_vs_oracle_and_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let spec = random_spec(&mut rng, 4);
            let theta = random_theta(&spec, &mut rng);
            let data = random_data(&spec, 8, &mut rng);
            let parts = data.partition(&spec).unwrap();
            let rows = data.all_rows();
            let lfs: Vec<_> = parts.blocks.iter().map(|b| local_log_density(&spec, &theta, b, &rows).unwrap()).collect();
            for b in &parts.blocks {
                let lf = local_log_density(&spec, &theta, b, &rows).unwrap();
                for r in 0..8 {
                    for k in 0..spec.k {
                        let o: f64 =
                            b.features.iter().zip(&b.columns).map(|(&f, c)| logpdf_oracle(&theta.params[k][f], c, r)).sum();
                        assert!(rel(lf[r * spec.k + k], o) <= 1e-10 || (lf[r * spec.k + k] - o).abs() < 1e-12);
                    }
                }
            }
            // sum over parties equals the joint component density
            let mut joint = vec![0.0; spec.k];
            for r in 0..8 {
                component_log_joint(&theta, &data, r, &mut joint);
                for k in 0..spec.k {
                    let s: f64 = lfs.iter().map(|lf| lf[r * spec.k + k]).sum();
                    assert!((s - joint[k]).abs() <= 1e-12 * joint[k].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn dmat_vs_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 3);
            let layout = spec.layout();
            let theta = random_theta(&spec, &mut rng);
            let data = random_data(&spec, 4, &mut rng);
            let parts = data.partition(&spec).unwrap();
            let rows = data.all_rows();
            for b in &parts.blocks {
                let d = layout.party_dims[b.party];
                let dm = local_dmat(&spec, &layout, &theta, b, &rows).unwrap();
                let base = theta.to_vec(&layout);
                for k in 0..spec.k {
                    let off = layout.party_component_offset(b.party, k);
                    for j in 0..d {
                        let eval = |delta: f64| {
                            let mut v = base.clone();
                            v[off + j] += delta;
                            let t = ThetaCon::from_vec(&spec, &layout, &v).unwrap();
                            // categorical weights are perturbed off the simplex on purpose:
                            // dmat is the partial derivative in the unconstrained sense
                            b.features
                                .iter()
                                .zip(&b.columns)
                                .map(|(&f, c)| match (&t.params[k][f], c) {
                                    (FeatureParams::Beta { a, b }, Column::Continuous(v)) => {
                                        let x = v[0];
                                        (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(*a, *b)
                                    }
                                    (FeatureParams::Categorical(w), Column::Categorical(v)) => w[v[0] as usize].ln(),
                                    _ => unreachable!(),
                                })
                                .sum::<f64>()
                        };
                        let fd = (eval(h) - eval(-h)) / (2.0 * h);
                        let an = dm[k * d + j];
                        assert!((an - fd).abs() <= 1e-4 * an.abs().max(1e-2), "{an} vs {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn normalizer_examples() {
        assert_eq!(compute_normalizer(&[-30.0, -45.0], -20.0, 0.01), 10.0);
        assert_eq!(compute_normalizer(&[-5.0, -50.0], -20.0, 0.01), 0.0);
        // exactly at threshold is left alone
        assert_eq!(compute_normalizer(&[-20.0], -20.0, 0.01), 0.0);
        let c = compute_normalizer(&[-20.004], -20.0, 0.01);
        assert_eq!(c, 0.01);
        for m in [-21.3, -100.0, -33.333, -20.0001] {
            let c = compute_normalizer(&[m], -20.0, 0.01);
            let j = (c / 0.01).round();
            assert!(m + j * 0.01 >= -20.0 && m + (j - 1.0) * 0.01 < -20.0, "{m} {c}");
        }
    }

    #[test]
    fn single_component_likelihood_is_sum_of_lf() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut spec = random_spec(&mut rng, 1);
        spec.k = 1;
        let mut theta = random_theta(&spec, &mut rng);
        theta.pi = vec![1.0];
        let data = random_data(&spec, 10, &mut rng);
        let parts = data.partition(&spec).unwrap();
        let rows = data.all_rows();
        let s: f64 = parts.blocks.iter().flat_map(|b| local_log_density(&spec, &theta, b, &rows).unwrap()).sum();
        assert!(rel(log_likelihood(&spec, &theta, &data).unwrap(), s) < 1e-12);
    }

    #[test]
    fn likelihood_permutation_invariant_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut spec = random_spec(&mut rng, 4);
        spec.k = 3;
        let theta = random_theta(&spec, &mut rng);
        let data = random_data(&spec, 10, &mut rng);
        let ll = log_likelihood(&spec, &theta, &data).unwrap();
        let perm = [2, 0, 1];
        let permuted = ThetaCon {
            pi: perm.iter().map(|&i| theta.pi[i]).collect(),
            params: perm.iter().map(|&i| theta.params[i].clone()).collect(),
        };
        assert!(rel(log_likelihood(&spec, &permuted, &data).unwrap(), ll) < 1e-13);
        // direct (non log-space) oracle with the independent density
        let mut o = 0.0;
        for r in 0..10 {
            let mut s = 0.0;
            for k in 0..3 {
                let lf: f64 = data.columns.iter().enumerate().map(|(f, c)| logpdf_oracle(&theta.params[k][f], c, r)).sum();
                s += theta.pi[k] * lf.exp();
            }
            o += s.ln();
        }
        assert!(rel(ll, o) <= 1e-10, "{ll} vs {o}");
    }

    #[test]
    fn likelihood_gradient_vs_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let h = 1e-6;
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 4);
            let layout = spec.layout();
            let theta = random_theta(&spec, &mut rng);
            let n = rng.random_range(1..=16);
            let data = random_data(&spec, n, &mut rng);
            let g = per_example_gradients(&spec, &layout, &theta, &data, &data.all_rows()).unwrap();
            let base = theta.to_vec(&layout);
            // unnormalized evaluation: pi and omega treated as free coordinates
            let ll = |v: &[f64]| {
                let t = ThetaCon::from_vec(&spec, &layout, v).unwrap();
                let mut tot = 0.0;
                for r in 0..n {
                    let mut s = 0.0;
                    for k in 0..spec.k {
                        let lf: f64 = data.columns.iter().enumerate().map(|(f, c)| logpdf_oracle(&t.params[k][f], c, r)).sum();
                        s += t.pi[k] * lf.exp();
                    }
                    tot += s.ln();
                }
                tot
            };
            for i in 0..layout.con_len {
                let mut p = base.clone();
                let mut m = base.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (ll(&p) - ll(&m)) / (2.0 * h);
                let an: f64 = g.iter().map(|gn| gn[i]).sum();
                assert!((an - fd).abs() <= 1e-4 * an.abs().max(1e-3), "coord {i}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn synthetic_supports_and_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let spec = MixtureSpec {
            k: 2,
            features: vec![
                FeatureSpec { name: "x".into(), kind: FeatureKind::ContinuousBeta, party: 0 },
                FeatureSpec { name: "c".into(), kind: FeatureKind::Categorical { n_categories: 3 }, party: 1 },
            ],
            priors: PriorSpec::default(),
        };
        let theta = ThetaCon {
            pi: vec![1.0, 0.0],
            params: vec![
                vec![FeatureParams::Beta { a: 0.3, b: 0.3 }, FeatureParams::Categorical(vec![0.2, 0.5, 0.3])],
                vec![FeatureParams::Beta { a: 2.0, b: 2.0 }, FeatureParams::Categorical(vec![0.0, 0.0, 1.0])],
            ],
        };
        let n = 100_000;
        let d = synthetic_dataset(&spec, &theta, n, &mut rng).unwrap();
        d.validate(&spec).unwrap();
        let Column::Continuous(x) = &d.columns[0] else { panic!() };
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        let Column::Categorical(c) = &d.columns[1] else { panic!() };
        for (j, w) in [0.2, 0.5, 0.3].iter().enumerate() {
            let f = c.iter().filter(|&&v| v as usize == j).count() as f64 / n as f64;
            assert!((f - w).abs() <= 4.0 * (w * (1.0 - w) / n as f64).sqrt(), "category {j}: {f}");
        }
        assert!(synthetic_dataset(&spec, &theta, 0, &mut rng).unwrap().n_rows == 0);
    }
}
