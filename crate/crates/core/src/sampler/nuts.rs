//! Multinomial No-U-Turn transitions with biased progressive sampling and
//! the generalized (velocity-based) U-turn criterion, including the extra
//! checks across merged subtrees.

use super::hamiltonian::{leapfrog, PhasePoint};
use crate::math::log_add_exp;
use crate::model::LogDensity;
use rand::Rng;

/// Outcome of one NUTS transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub point: PhasePoint,
    /// Mean Metropolis acceptance probability over all leapfrog states.
    pub accept_stat: f64,
    pub divergent: bool,
    pub n_leapfrog: usize,
    pub tree_depth: usize,
    /// Energy of the selected state minus the initial energy.
    pub energy_error: f64,
}

pub(crate) struct Nuts<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub inv_mass: &'a [f64],
    pub step_size: f64,
    pub max_depth: usize,
    pub max_energy_error: f64,
}

struct Subtree {
    first: PhasePoint,
    last: PhasePoint,
    proposal: PhasePoint,
    rho: Vec<f64>,
    log_sum_weight: f64,
}

#[derive(Default)]
struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<T: LogDensity + ?Sized> Nuts<'_, T> {
    fn no_u_turn(&self, minus: &PhasePoint, plus: &PhasePoint, rho: &[f64]) -> bool {
        dot(&plus.velocity(self.inv_mass), rho) > 0.0
            && dot(&minus.velocity(self.inv_mass), rho) > 0.0
    }

    /// Draws one transition from `start`, whose momentum must already be set.
    pub fn transition<R: Rng>(&self, start: PhasePoint, rng: &mut R) -> Transition {
        let h0 = start.energy(self.inv_mass);
        let mut stats = TreeStats::default();
        let mut backward_end = start.clone();
        let mut forward_end = start.clone();
        let mut rho = start.momentum.clone();
        let mut sample = start;
        let mut log_sum_weight = 0.0;
        let mut depth = 0;

        while depth < self.max_depth {
            let forward = rng.random_bool(0.5);
            let (near, far) = if forward {
                (&forward_end, &backward_end)
            } else {
                (&backward_end, &forward_end)
            };
            let step = if forward {
                self.step_size
            } else {
                -self.step_size
            };
            let Some(sub) = self.build_tree(near, depth, step, h0, &mut stats, rng) else {
                break;
            };
            depth += 1;

            if sub.log_sum_weight > log_sum_weight {
                sample = sub.proposal.clone();
            } else {
                let accept = (sub.log_sum_weight - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    sample = sub.proposal.clone();
                }
            }
            log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);

            let rho_total = add(&rho, &sub.rho);
            let mut persist = self.no_u_turn(far, &sub.last, &rho_total);
            persist &= self.no_u_turn(far, &sub.first, &add(&rho, &sub.first.momentum));
            persist &= self.no_u_turn(near, &sub.last, &add(&sub.rho, &near.momentum));

            rho = rho_total;
            if forward {
                forward_end = sub.last;
            } else {
                backward_end = sub.last;
            }
            if !persist {
                break;
            }
        }

        let energy_error = sample.energy(self.inv_mass) - h0;
        Transition {
            point: sample,
            accept_stat: if stats.n_leapfrog > 0 {
                stats.sum_metro_prob / stats.n_leapfrog as f64
            } else {
                0.0
            },
            divergent: stats.divergent,
            n_leapfrog: stats.n_leapfrog,
            tree_depth: depth,
            energy_error,
        }
    }

    fn build_tree<R: Rng>(
        &self,
        from: &PhasePoint,
        depth: usize,
        step: f64,
        h0: f64,
        stats: &mut TreeStats,
        rng: &mut R,
    ) -> Option<Subtree> {
        if depth == 0 {
            stats.n_leapfrog += 1;
            let next = match leapfrog(self.target, from, self.inv_mass, step) {
                Ok(p) => p,
                Err(_) => {
                    stats.divergent = true;
                    return None;
                }
            };
            let h = next.energy(self.inv_mass);
            let delta = h0 - h;
            if !(delta.abs() <= self.max_energy_error) {
                stats.divergent = true;
                return None;
            }
            stats.sum_metro_prob += delta.min(0.0).exp();
            return Some(Subtree {
                rho: next.momentum.clone(),
                first: next.clone(),
                last: next.clone(),
                proposal: next,
                log_sum_weight: delta,
            });
        }

        let init = self.build_tree(from, depth - 1, step, h0, stats, rng)?;
        let fin = self.build_tree(&init.last, depth - 1, step, h0, stats, rng)?;

        let log_sum_weight = log_add_exp(init.log_sum_weight, fin.log_sum_weight);
        let accept = (fin.log_sum_weight - log_sum_weight).exp();
        let proposal = if rng.random::<f64>() < accept {
            fin.proposal
        } else {
            init.proposal
        };

        let rho = add(&init.rho, &fin.rho);
        let mut persist = self.no_u_turn(&init.first, &fin.last, &rho);
        persist &= self.no_u_turn(
            &init.first,
            &fin.first,
            &add(&init.rho, &fin.first.momentum),
        );
        persist &= self.no_u_turn(&init.last, &fin.last, &add(&fin.rho, &init.last.momentum));
        if !persist {
            return None;
        }
        Some(Subtree {
            first: init.first,
            last: fin.last,
            proposal,
            rho,
            log_sum_weight,
        })
    }
}
