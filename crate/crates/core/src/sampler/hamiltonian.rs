use crate::model::LogDensity;

/// Position, momentum and cached density/gradient of one point in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub gradient: Vec<f64>,
    pub log_density: f64,
}

/// A leapfrog step ran into a non-finite density or gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteState;

impl PhasePoint {
    /// Evaluates the target at `position`; momentum is left at zero.
    pub fn at<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>) -> Self {
        let mut gradient = vec![0.0; position.len()];
        let log_density = target.log_density_and_gradient(&position, &mut gradient);
        let momentum = vec![0.0; position.len()];
        Self {
            position,
            momentum,
            gradient,
            log_density,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }

    pub fn kinetic_energy(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self
            .momentum
            .iter()
            .zip(inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// Hamiltonian `-log p(q) + p' M^-1 p / 2`; `+inf` for impossible states.
    pub fn energy(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.log_density + self.kinetic_energy(inv_mass);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// Velocity `M^-1 p`.
    pub fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.momentum.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// One symplectic leapfrog step of size `step_size` (negative to integrate
/// backwards in time) under the diagonal metric `inv_mass`.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    point: &PhasePoint,
    inv_mass: &[f64],
    step_size: f64,
) -> Result<PhasePoint, NonFiniteState> {
    let half = 0.5 * step_size;
    let mut momentum: Vec<f64> = point
        .momentum
        .iter()
        .zip(&point.gradient)
        .map(|(p, g)| p + half * g)
        .collect();
    let position: Vec<f64> = point
        .position
        .iter()
        .zip(&momentum)
        .zip(inv_mass)
        .map(|((q, p), m)| q + step_size * m * p)
        .collect();
    let mut gradient = vec![0.0; position.len()];
    let log_density = target.log_density_and_gradient(&position, &mut gradient);
    for (p, g) in momentum.iter_mut().zip(&gradient) {
        *p += half * g;
    }
    let next = PhasePoint {
        position,
        momentum,
        gradient,
        log_density,
    };
    if next.is_finite() && next.momentum.iter().all(|p| p.is_finite()) {
        Ok(next)
    } else {
        Err(NonFiniteState)
    }
}
