//! Leapfrog integration and one multinomial no-U-turn transition.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{SamplerConfig, TargetDensity};
use crate::error::Result;

/// A point in phase space together with the cached density and gradient.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

impl PhasePoint {
    /// Evaluates the target at `position` with the given momentum.
    pub fn new<T: TargetDensity + ?Sized>(
        target: &T,
        position: Vec<f64>,
        momentum: Vec<f64>,
    ) -> Result<Self> {
        let mut gradient = vec![0.0; position.len()];
        let log_density = eval(target, &position, &mut gradient)?;
        Ok(Self {
            position,
            momentum,
            log_density,
            gradient,
        })
    }

    pub fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self
            .momentum
            .iter()
            .zip(inv_metric)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// Hamiltonian `−log π(q) + ½ pᵀM⁻¹p`; non-finite values map to `+∞`.
    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let h = -self.log_density + self.kinetic(inv_metric);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, inv_metric: &[f64]) -> Vec<f64> {
        self.momentum
            .iter()
            .zip(inv_metric)
            .map(|(p, m)| p * m)
            .collect()
    }
}

/// Target evaluation where a non-finite gradient turns into `−∞` density.
fn eval<T: TargetDensity + ?Sized>(target: &T, q: &[f64], grad: &mut [f64]) -> Result<f64> {
    let lp = target.log_density_gradient(q, grad)?;
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lp)
}

/// One leapfrog step under a diagonal metric with inverse `inv_metric`.
///
/// A non-finite density or gradient along the way yields a point with
/// `log_density = −∞`, which the caller treats as divergent.
pub fn leapfrog<T: TargetDensity + ?Sized>(
    target: &T,
    z: &PhasePoint,
    stepsize: f64,
    inv_metric: &[f64],
) -> Result<PhasePoint> {
    let mut out = z.clone();
    leapfrog_in_place(target, &mut out, stepsize, inv_metric)?;
    Ok(out)
}

pub(crate) fn leapfrog_in_place<T: TargetDensity + ?Sized>(
    target: &T,
    z: &mut PhasePoint,
    stepsize: f64,
    inv_metric: &[f64],
) -> Result<()> {
    if stepsize == 0.0 {
        return Ok(());
    }
    let half = 0.5 * stepsize;
    for (p, g) in z.momentum.iter_mut().zip(&z.gradient) {
        *p += half * g;
    }
    for ((q, p), m) in z.position.iter_mut().zip(&z.momentum).zip(inv_metric) {
        *q += stepsize * m * p;
    }
    z.log_density = eval(target, &z.position, &mut z.gradient)?;
    for (p, g) in z.momentum.iter_mut().zip(&z.gradient) {
        *p += half * g;
    }
    Ok(())
}

/// Per-draw sampler statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    /// Hamiltonian at the selected point.
    pub energy: f64,
    pub stepsize: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Generalized no-U-turn criterion over a trajectory segment with summed
/// momentum `rho` and end-point velocities.
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Mutable bookkeeping shared across one trajectory.
struct Trajectory<'a, T: TargetDensity + ?Sized, R: Rng + ?Sized> {
    target: &'a T,
    rng: &'a mut R,
    inv_metric: &'a [f64],
    stepsize: f64,
    h0: f64,
    max_energy_error: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Ends of a built subtree.
struct Edge {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl<T: TargetDensity + ?Sized, R: Rng + ?Sized> Trajectory<'_, T, R> {
    /// Builds a subtree of `2^depth` leapfrog steps starting from `z` in the
    /// direction of the sign of `self.stepsize`. `z` ends at the far edge.
    /// Returns `None` when the subtree diverged or turned.
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        rho: &mut [f64],
        log_sum_weight: &mut f64,
    ) -> Result<Option<Edge>> {
        if depth == 0 {
            leapfrog_in_place(self.target, z, self.stepsize, self.inv_metric)?;
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_metric);
            if h - self.h0 > self.max_energy_error {
                self.divergent = true;
            }
            let log_w = self.h0 - h;
            *log_sum_weight = log_sum_exp(*log_sum_weight, log_w);
            self.sum_metro_prob += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            *z_propose = z.clone();
            add_assign(rho, &z.momentum);
            if self.divergent {
                return Ok(None);
            }
            let p_sharp = z.velocity(self.inv_metric);
            return Ok(Some(Edge {
                p_sharp_beg: p_sharp.clone(),
                p_sharp_end: p_sharp,
                p_beg: z.momentum.clone(),
                p_end: z.momentum.clone(),
            }));
        }

        let dim = z.position.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut rho_init = vec![0.0; dim];
        let Some(init) = self.build_tree(depth - 1, z, z_propose, &mut rho_init, &mut lsw_init)? else {
            return Ok(None);
        };

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut rho_final = vec![0.0; dim];
        let Some(fin) =
            self.build_tree(depth - 1, z, &mut z_propose_final, &mut rho_final, &mut lsw_final)?
        else {
            return Ok(None);
        };

        // Multinomial sample from the right subtree.
        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        add_assign(rho, &rho_subtree);

        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&rho_final, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);

        if !persist {
            return Ok(None);
        }
        Ok(Some(Edge {
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            p_beg: init.p_beg,
            p_end: fin.p_end,
        }))
    }
}

/// One transition of multinomial dynamic HMC from `current`.
///
/// Pathological trajectories never abort: a diverging subtree ends the
/// trajectory, the draw is taken from the valid part, and the returned
/// statistics carry the divergence flag.
pub fn nuts_draw<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &PhasePoint,
    stepsize: f64,
    inv_metric: &[f64],
    rng: &mut R,
    config: &SamplerConfig,
) -> Result<(PhasePoint, DrawStats)> {
    let dim = current.position.len();
    let mut z0 = current.clone();
    for (p, m) in z0.momentum.iter_mut().zip(inv_metric) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
    let h0 = z0.hamiltonian(inv_metric);

    let p_sharp0 = z0.velocity(inv_metric);
    let mut z_fwd = z0.clone();
    let mut z_bck = z0.clone();
    let mut z_sample = z0.clone();
    let mut z_propose = z0.clone();

    let mut p_fwd_bck = z0.momentum.clone();
    let mut p_sharp_fwd_bck = p_sharp0.clone();
    let mut p_sharp_fwd_fwd = p_sharp0.clone();
    let mut p_bck_fwd = z0.momentum.clone();
    let mut p_sharp_bck_fwd = p_sharp0.clone();
    let mut p_sharp_bck_bck = p_sharp0;

    let mut rho = z0.momentum.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;

    let mut traj = Trajectory {
        target,
        rng,
        inv_metric,
        stepsize,
        h0,
        max_energy_error: config.max_energy_error,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };

    while depth < config.max_tree_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;

        let forward = traj.rng.random::<f64>() > 0.5;
        let valid = if forward {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_bck);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
            traj.stepsize = stepsize;
            let edge = traj.build_tree(depth, &mut z_fwd, &mut z_propose, &mut rho_fwd, &mut lsw_subtree)?;
            edge.map(|e| {
                p_sharp_fwd_bck = e.p_sharp_beg;
                p_sharp_fwd_fwd = e.p_sharp_end;
                p_fwd_bck = e.p_beg;
            })
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_fwd);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
            traj.stepsize = -stepsize;
            let edge = traj.build_tree(depth, &mut z_bck, &mut z_propose, &mut rho_bck, &mut lsw_subtree)?;
            edge.map(|e| {
                p_sharp_bck_fwd = e.p_sharp_beg;
                p_sharp_bck_bck = e.p_sharp_end;
                p_bck_fwd = e.p_beg;
            })
        };
        if valid.is_none() {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight {
            z_sample = z_propose.clone();
        } else {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if traj.rng.random::<f64>() < accept {
                z_sample = z_propose.clone();
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist {
            break;
        }
    }

    let n_leapfrog = traj.n_leapfrog;
    let accept_stat = if n_leapfrog > 0 {
        traj.sum_metro_prob / n_leapfrog as f64
    } else {
        0.0
    };
    let stats = DrawStats {
        accept_stat,
        tree_depth: depth,
        n_leapfrog,
        divergent: traj.divergent,
        energy: z_sample.hamiltonian(inv_metric),
        stepsize,
    };
    Ok((z_sample, stats))
}
