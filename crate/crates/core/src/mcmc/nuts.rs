//! Multinomial No-U-Turn transitions with a diagonal metric.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::LogDensity;
use crate::real::log_add_exp;

/// Energy error beyond which a trajectory is flagged divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, x: Vec<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let logp = target.log_density_and_grad(&x, &mut grad);
        let p = vec![0.0; x.len()];
        Self { x, p, grad, logp }
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

pub fn kinetic_energy(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

/// `−log p(x) + ½ pᵀ M⁻¹ p`; NaN maps to `+∞`.
pub fn hamiltonian(point: &PhasePoint, inv_mass: &[f64]) -> f64 {
    let h = -point.logp + kinetic_energy(&point.p, inv_mass);
    if h.is_nan() {
        f64::INFINITY
    } else {
        h
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards).
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, point: &mut PhasePoint, eps: f64, inv_mass: &[f64]) {
    let half = 0.5 * eps;
    for (p, g) in point.p.iter_mut().zip(&point.grad) {
        *p += half * g;
    }
    for ((x, p), m) in point.x.iter_mut().zip(&point.p).zip(inv_mass) {
        *x += eps * m * p;
    }
    point.logp = target.log_density_and_grad(&point.x, &mut point.grad);
    for (p, g) in point.p.iter_mut().zip(&point.grad) {
        *p += half * g;
    }
}

pub fn resample_momentum<R: Rng + ?Sized>(point: &mut PhasePoint, inv_mass: &[f64], rng: &mut R) {
    for (p, m) in point.p.iter_mut().zip(inv_mass) {
        let z: f64 = StandardNormal.sample(rng);
        *p = z / m.sqrt();
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub point: PhasePoint,
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

struct Tree {
    p_minus: Vec<f64>,
    p_plus: Vec<f64>,
    sharp_minus: Vec<f64>,
    sharp_plus: Vec<f64>,
    rho: Vec<f64>,
    log_weight: f64,
    proposal: PhasePoint,
}

#[derive(Default)]
struct Stats {
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
}

fn no_u_turn(sharp_minus: &[f64], sharp_plus: &[f64], rho: &[f64]) -> bool {
    let dot = |a: &[f64]| a.iter().zip(rho).map(|(x, y)| x * y).sum::<f64>();
    dot(sharp_plus) > 0.0 && dot(sharp_minus) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub struct Nuts<'a, T: ?Sized> {
    pub target: &'a T,
    pub inv_mass: Vec<f64>,
    pub step_size: f64,
    pub max_depth: usize,
}

impl<T: LogDensity + ?Sized> Nuts<'_, T> {
    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_mass).map(|(p, m)| p * m).collect()
    }

    fn leaf(&self, point: &PhasePoint, log_weight: f64) -> Tree {
        let sharp = self.sharp(&point.p);
        Tree {
            p_minus: point.p.clone(),
            p_plus: point.p.clone(),
            sharp_minus: sharp.clone(),
            sharp_plus: sharp,
            rho: point.p.clone(),
            log_weight,
            proposal: point.clone(),
        }
    }

    /// Joins `old` with the freshly built `new` (which lies on the `dir`
    /// side). Returns the merged tree and whether it is still free of
    /// U-turns, both overall and across the seam.
    fn merge<R: Rng + ?Sized>(&self, old: Tree, new: Tree, dir: f64, biased: bool, rng: &mut R) -> (Tree, bool) {
        let log_weight = log_add_exp(old.log_weight, new.log_weight);
        let take_new = if biased {
            new.log_weight > old.log_weight || rng.random::<f64>() < (new.log_weight - old.log_weight).exp()
        } else {
            rng.random::<f64>() < (new.log_weight - log_weight).exp()
        };
        let proposal = if take_new { new.proposal } else { old.proposal };
        let (bck, fwd) = if dir > 0.0 {
            (
                (old.p_minus, old.p_plus, old.sharp_minus, old.sharp_plus, old.rho),
                (new.p_minus, new.p_plus, new.sharp_minus, new.sharp_plus, new.rho),
            )
        } else {
            (
                (new.p_minus, new.p_plus, new.sharp_minus, new.sharp_plus, new.rho),
                (old.p_minus, old.p_plus, old.sharp_minus, old.sharp_plus, old.rho),
            )
        };
        let (b_pm, b_pp, b_sm, b_sp, b_rho) = bck;
        let (f_pm, f_pp, f_sm, f_sp, f_rho) = fwd;
        let rho = add(&b_rho, &f_rho);
        let persist = no_u_turn(&b_sm, &f_sp, &rho)
            && no_u_turn(&b_sm, &f_sm, &add(&b_rho, &f_pm))
            && no_u_turn(&b_sp, &f_sp, &add(&f_rho, &b_pp));
        let tree = Tree {
            p_minus: b_pm,
            p_plus: f_pp,
            sharp_minus: b_sm,
            sharp_plus: f_sp,
            rho,
            log_weight,
            proposal,
        };
        (tree, persist)
    }

    /// Builds `2^depth` leapfrog steps from `edge`, advancing it. `None`
    /// marks an invalid subtree (divergence or internal U-turn).
    fn build_tree<R: Rng + ?Sized>(
        &self,
        edge: &mut PhasePoint,
        depth: usize,
        dir: f64,
        h0: f64,
        stats: &mut Stats,
        rng: &mut R,
    ) -> Option<Tree> {
        if depth == 0 {
            leapfrog(self.target, edge, dir * self.step_size, &self.inv_mass);
            stats.n_leapfrog += 1;
            let delta = hamiltonian(edge, &self.inv_mass) - h0;
            if !(delta <= MAX_ENERGY_ERROR) || !edge.is_finite() {
                stats.divergent = true;
                return None;
            }
            stats.sum_accept += (-delta).exp().min(1.0);
            return Some(self.leaf(edge, -delta));
        }
        let inner = self.build_tree(edge, depth - 1, dir, h0, stats, rng)?;
        let outer = self.build_tree(edge, depth - 1, dir, h0, stats, rng)?;
        let (tree, persist) = self.merge(inner, outer, dir, false, rng);
        persist.then_some(tree)
    }

    /// One NUTS transition from `current` (whose momentum is resampled).
    pub fn transition<R: Rng + ?Sized>(&self, current: &PhasePoint, rng: &mut R) -> Transition {
        let mut start = current.clone();
        resample_momentum(&mut start, &self.inv_mass, rng);
        let h0 = hamiltonian(&start, &self.inv_mass);
        let mut minus = start.clone();
        let mut plus = start.clone();
        let mut tree = self.leaf(&start, 0.0);
        let mut stats = Stats::default();
        let mut depth = 0;
        while depth < self.max_depth {
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let edge = if dir > 0.0 { &mut plus } else { &mut minus };
            let Some(sub) = self.build_tree(edge, depth, dir, h0, &mut stats, rng) else {
                depth += 1;
                break;
            };
            depth += 1;
            let (merged, persist) = self.merge(tree, sub, dir, true, rng);
            tree = merged;
            if !persist {
                break;
            }
        }
        let mut point = tree.proposal;
        point.p.fill(0.0);
        Transition {
            point,
            accept_stat: if stats.n_leapfrog > 0 {
                stats.sum_accept / stats.n_leapfrog as f64
            } else {
                0.0
            },
            divergent: stats.divergent,
            depth,
            n_leapfrog: stats.n_leapfrog,
        }
    }

    /// Doubles or halves the step size until a single leapfrog step's
    /// acceptance probability crosses 0.8.
    pub fn find_reasonable_step_size<R: Rng + ?Sized>(&mut self, current: &PhasePoint, rng: &mut R) {
        let threshold = 0.8f64.ln();
        let trial = |eps: f64, rng: &mut R| -> f64 {
            let mut z = current.clone();
            resample_momentum(&mut z, &self.inv_mass, rng);
            let h0 = hamiltonian(&z, &self.inv_mass);
            leapfrog(self.target, &mut z, eps, &self.inv_mass);
            let delta = h0 - hamiltonian(&z, &self.inv_mass);
            if delta.is_nan() {
                f64::NEG_INFINITY
            } else {
                delta
            }
        };
        let mut eps = self.step_size;
        let up = trial(eps, rng) > threshold;
        for _ in 0..100 {
            let next = if up { 2.0 * eps } else { 0.5 * eps };
            let delta = trial(next, rng);
            if up && !(delta > threshold) {
                break;
            }
            eps = next;
            if !up && delta > threshold {
                break;
            }
            if !(1e-10..=1e7).contains(&eps) {
                break;
            }
        }
        self.step_size = eps;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DiagGaussian;

    #[test]
    fn leapfrog_is_reversible() {
        let t = DiagGaussian {
            mean: vec![0.5, -1.0],
            sd: vec![1.0, 2.0],
        };
        let inv_mass = [1.0, 3.0];
        let mut z = PhasePoint::new(&t, vec![0.2, 0.7]);
        z.p = vec![0.4, -1.1];
        let orig = z.clone();
        for _ in 0..10 {
            leapfrog(&t, &mut z, 0.1, &inv_mass);
        }
        for _ in 0..10 {
            leapfrog(&t, &mut z, -0.1, &inv_mass);
        }
        for (a, b) in z.x.iter().zip(&orig.x).chain(z.p.iter().zip(&orig.p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_u_turn_on_opposed_momenta() {
        assert!(no_u_turn(&[1.0], &[1.0], &[2.0]));
        assert!(!no_u_turn(&[1.0], &[-1.0], &[0.5]));
    }
}
