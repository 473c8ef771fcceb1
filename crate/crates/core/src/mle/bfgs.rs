//! Quasi-Newton minimization with a backtracking Armijo line search.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the largest absolute gradient entry falls below this.
    pub grad_tol: f64,
    /// Largest allowed step in any coordinate.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-7,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(f: F, x0: &[f64], opts: BfgsOptions) -> BfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut h = identity(n);
    let mut first = true;

    for iter in 0..opts.max_iter {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return BfgsResult { x, value: fx, gradient: g, iterations: iter, converged: false };
        }
        if max_abs(&g) < opts.grad_tol {
            return BfgsResult { x, value: fx, gradient: g, iterations: iter, converged: true };
        }

        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
        }
        let largest = max_abs(&dir);
        if largest > opts.max_step {
            let s = opts.max_step / largest;
            dir.iter_mut().for_each(|d| *d *= s);
        }

        let slope = dot(&dir, &g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            let converged = max_abs(&g) < opts.grad_tol.sqrt();
            return BfgsResult { x, value: fx, gradient: g, iterations: iter, converged };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().enumerate().for_each(|(i, row)| row[i] = scale);
                first = false;
            }
            update_inverse(&mut h, &s, &y, sy);
        }
        let stalled = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0) && max_abs(&s) < 1e-12;
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            let converged = max_abs(&g) < opts.grad_tol.sqrt();
            return BfgsResult { x, value: fx, gradient: g, iterations: iter + 1, converged };
        }
    }
    let converged = max_abs(&g) < opts.grad_tol;
    BfgsResult { x, value: fx, gradient: g, iterations: opts.max_iter, converged }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
