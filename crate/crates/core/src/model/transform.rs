//! Bijections from the unconstrained space.
//!
//! Simplex: centred stick-breaking, `z_j = logistic(y_j - ln(K - 1 - j))`,
//! so `y = 0` maps to the uniform simplex. Positive reals: `exp`.

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Result of mapping `K-1` unconstrained coordinates to a `K`-simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct StickBreak {
    pub x: Vec<f64>,
    pub logdet: f64,
    /// Gradient of `logdet` with respect to `y`.
    pub logdet_grad: Vec<f64>,
    z: Vec<f64>,
    stick: Vec<f64>,
}

pub fn stick_breaking(y: &[f64]) -> StickBreak {
    let k = y.len() + 1;
    let mut x = Vec::with_capacity(k);
    let mut z = Vec::with_capacity(k - 1);
    let mut stick = Vec::with_capacity(k);
    let mut s = 1.0;
    let mut log_s = 0.0;
    let mut logdet = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        let u = yj - ((k - 1 - j) as f64).ln();
        let zj = logistic(u);
        // ln z + ln(1 - z) computed stably from u
        let log_z = -softplus(-u);
        let log_1mz = -softplus(u);
        logdet += log_z + log_1mz + log_s;
        stick.push(s);
        x.push(s * zj);
        z.push(zj);
        s *= 1.0 - zj;
        log_s += log_1mz;
    }
    stick.push(s);
    x.push(s);
    let logdet_grad = z.iter().enumerate().map(|(j, &zj)| 1.0 - (k - j) as f64 * zj).collect();
    StickBreak { x, logdet, logdet_grad, z, stick }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Pulls a gradient with respect to the simplex point `x` back to `y`.
pub fn stick_breaking_pullback(sb: &StickBreak, gx: &[f64]) -> Vec<f64> {
    let k = sb.x.len();
    let mut gy = vec![0.0; k - 1];
    let mut g_stick = gx[k - 1];
    for j in (0..k - 1).rev() {
        let (zj, sj) = (sb.z[j], sb.stick[j]);
        let gz = gx[j] * sj - g_stick * sj;
        gy[j] = gz * zj * (1.0 - zj);
        g_stick = gx[j] * zj + g_stick * (1.0 - zj);
    }
    gy
}
