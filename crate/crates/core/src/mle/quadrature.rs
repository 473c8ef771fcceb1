//! Gauss-Hermite rules and the adaptive quadrature of the random-effect
//! integral in the treatment arm.

use crate::error::{Error, Result};
use crate::math::{binomial_logpmf_logit, log_sum_exp, logistic};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Nodes and weights for expectations against a standard normal:
/// `E[f(Z)] ~= sum_k weights[k] * f(nodes[k])`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    log_weights: Vec<f64>,
    log_phi: Vec<f64>,
}

impl GaussHermite {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(Z)]` for a standard normal `Z`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// Gauss-Hermite rule of the given order, rescaled from the physicists'
/// weight `exp(-x^2)` to the standard normal density.
pub fn gh_nodes(order: usize) -> Result<GaussHermite> {
    if order == 0 {
        return Err(Error::InvalidConfig("quadrature order must be >= 1".into()));
    }
    let (x, w) = physicists_rule(order);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&x, &w)| (std::f64::consts::SQRT_2 * x, w / sqrt_pi))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(GaussHermite {
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        log_phi: nodes.iter().map(|z| -HALF_LN_2PI - 0.5 * z * z).collect(),
        nodes,
        weights,
    })
}

/// Roots of the Hermite polynomial `H_n` by Newton iteration on the
/// orthonormal recurrence, with the classical asymptotic initial guesses.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Log of `I(a, tau) = int Bin(r; n, logistic(a + z tau)) phi(z) dz` and its
/// derivatives in `a` and `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmIntegral {
    pub log_value: f64,
    /// d log I / da
    pub d_a: f64,
    /// d^2 log I / da^2
    pub d2_a: f64,
    /// d log I / dtau
    pub d_tau: f64,
}

const MODE_MAX_ITER: usize = 50;
const MODE_TOL: f64 = 1e-10;

/// Log integrand `log Bin(r; n, logistic(a + z tau)) + log phi(z)`.
fn log_integrand(r: u64, n: u64, a: f64, tau: f64, z: f64) -> f64 {
    binomial_logpmf_logit(r, n, a + z * tau) - HALF_LN_2PI - 0.5 * z * z
}

/// Mode of the (strictly log-concave) integrand by damped Newton.
fn integrand_mode(r: u64, n: u64, a: f64, tau: f64) -> (f64, f64) {
    let (rf, nf) = (r as f64, n as f64);
    let derivs = |z: f64| {
        let p = logistic(a + z * tau);
        let g1 = tau * (rf - nf * p) - z;
        let g2 = -tau * tau * nf * p * (1.0 - p) - 1.0;
        (g1, g2)
    };
    let mut z = 0.0;
    let mut value = log_integrand(r, n, a, tau, z);
    for _ in 0..MODE_MAX_ITER {
        let (g1, g2) = derivs(z);
        let mut step = -g1 / g2;
        let mut next = z + step;
        let mut next_value = log_integrand(r, n, a, tau, next);
        let mut halvings = 0;
        while next_value < value && halvings < 30 {
            step *= 0.5;
            next = z + step;
            next_value = log_integrand(r, n, a, tau, next);
            halvings += 1;
        }
        z = next;
        value = next_value;
        if step.abs() < MODE_TOL {
            break;
        }
    }
    let (_, g2) = derivs(z);
    (z, (-g2).sqrt().recip())
}

/// Adaptive Gauss-Hermite evaluation of the treatment-arm integral: the
/// rule is recentred at the integrand mode and scaled by its curvature.
/// At `tau == 0` the integral is the plug-in binomial term at `z = 0`.
pub fn arm_integral(r: u64, n: u64, a: f64, tau: f64, gh: &GaussHermite) -> ArmIntegral {
    let (rf, nf) = (r as f64, n as f64);
    if tau == 0.0 {
        let p = logistic(a);
        return ArmIntegral {
            log_value: binomial_logpmf_logit(r, n, a),
            d_a: rf - nf * p,
            d2_a: -nf * p * (1.0 - p),
            d_tau: 0.0,
        };
    }
    let (mode, scale) = integrand_mode(r, n, a, tau);
    let log_scale = scale.ln();
    let mut terms = Vec::with_capacity(gh.order());
    let mut points = Vec::with_capacity(gh.order());
    for ((&u, &lw), &lphi) in gh.nodes.iter().zip(&gh.log_weights).zip(&gh.log_phi) {
        let z = mode + scale * u;
        terms.push(lw + log_scale + log_integrand(r, n, a, tau, z) - lphi);
        points.push(z);
    }
    let log_value = log_sum_exp(&terms);

    // moments under the normalized integrand
    let (mut m_resid, mut m_np, mut m_np2, mut m_info, mut m_resid_z) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &z) in terms.iter().zip(&points) {
        let w = (t - log_value).exp();
        let p = logistic(a + z * tau);
        let np = nf * p;
        m_resid += w * (rf - np);
        m_np += w * np;
        m_np2 += w * np * np;
        m_info += w * np * (1.0 - p);
        m_resid_z += w * (rf - np) * z;
    }
    let var_np = (m_np2 - m_np * m_np).max(0.0);
    ArmIntegral {
        log_value,
        d_a: m_resid,
        d2_a: var_np - m_info,
        d_tau: m_resid_z,
    }
}
