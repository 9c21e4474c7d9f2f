//! Warmup: dual-averaging step size and windowed diagonal metric estimation.

use rand::Rng;
use rand_distr::StandardNormal;

use super::nuts::{leapfrog, nuts_draw, DrawStats, PhasePoint};
use super::{SamplerConfig, TargetDensity};
use crate::error::{Error, Result};

/// Nesterov dual averaging of `log ε` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target_accept: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target_accept: f64, stepsize: f64) -> Self {
        Self {
            target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: (10.0 * stepsize).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Restarts around a new initial step size.
    pub fn restart(&mut self, stepsize: f64) {
        *self = Self::new(self.target_accept, stepsize);
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept = accept_stat.min(1.0);
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target_accept - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = x_eta * x + (1.0 - x_eta) * self.x_bar;
        x.exp()
    }

    /// The averaged iterate `exp(x̄)`, used once adaptation ends.
    pub fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }

    pub fn log_stepsize_bar(&self) -> f64 {
        self.x_bar
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk toward `1e-3`, as in the reference sampler.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup phase of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Fast step-size adaptation before the first metric window.
    InitBuffer,
    /// Slow metric window; the value is the window's index.
    Window(usize),
    /// Final fast step-size adaptation with the metric frozen.
    TermBuffer,
}

/// Iteration ranges of the warmup schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmupSchedule {
    pub init_buffer: usize,
    /// End (exclusive) of every slow window.
    pub window_ends: Vec<usize>,
    pub term_buffer: usize,
    pub total: usize,
}

impl WarmupSchedule {
    /// Doubling windows starting at `base_window`, with the last one stretched
    /// so the term buffer begins exactly `term_buffer` iterations before the end.
    pub fn new(warmup: usize, init_buffer: usize, base_window: usize, term_buffer: usize) -> Result<Self> {
        if base_window == 0 {
            return Err(Error::config("adapt_window", "must be positive"));
        }
        if init_buffer + base_window + term_buffer > warmup {
            return Err(Error::config(
                "num_warmup",
                format!(
                    "{warmup} is shorter than init buffer + first window + term buffer = {}",
                    init_buffer + base_window + term_buffer
                ),
            ));
        }
        let slow_end = warmup - term_buffer;
        let mut window_ends = Vec::new();
        let mut start = init_buffer;
        let mut size = base_window;
        loop {
            let mut end = start + size;
            let next_size = 2 * size;
            if end + next_size > slow_end {
                end = slow_end;
            }
            window_ends.push(end);
            if end == slow_end {
                break;
            }
            start = end;
            size = next_size;
        }
        Ok(Self {
            init_buffer,
            window_ends,
            term_buffer,
            total: warmup,
        })
    }

    pub fn phase(&self, iteration: usize) -> Phase {
        if iteration < self.init_buffer {
            return Phase::InitBuffer;
        }
        match self.window_ends.iter().position(|&e| iteration < e) {
            Some(w) => Phase::Window(w),
            None => Phase::TermBuffer,
        }
    }
}

/// Doubles or halves the step size until a single leapfrog step crosses an
/// acceptance probability of 0.8.
pub fn find_reasonable_stepsize<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    z: &PhasePoint,
    mut stepsize: f64,
    inv_metric: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let log_target = 0.8f64.ln();
    let mut direction = 0i32;
    loop {
        let mut start = z.clone();
        for (p, m) in start.momentum.iter_mut().zip(inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
        let h0 = start.hamiltonian(inv_metric);
        let h = leapfrog(target, &start, stepsize, inv_metric)?.hamiltonian(inv_metric);
        let delta = h0 - h;
        if direction == 0 {
            direction = if delta > log_target { 1 } else { -1 };
        } else if (direction == 1 && !(delta > log_target))
            || (direction == -1 && !(delta < log_target))
        {
            return Ok(stepsize);
        }
        stepsize = if direction == 1 { stepsize * 2.0 } else { stepsize * 0.5 };
        if stepsize > 1e7 {
            return Err(Error::domain("posterior appears improper: step size search diverged upward"));
        }
        if stepsize < 1e-300 {
            return Err(Error::domain("step size search collapsed to zero"));
        }
    }
}

/// Result of warmup.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub stepsize: f64,
    /// Diagonal of the inverse metric (posterior variance estimate).
    pub inv_metric: Vec<f64>,
    /// Chain state at the end of warmup.
    pub point: PhasePoint,
    pub warmup_stats: Vec<DrawStats>,
    /// `log ε̄` after every warmup iteration; it restarts with each window.
    pub log_stepsize_bar: Vec<f64>,
    pub schedule: WarmupSchedule,
}

/// Runs warmup from `init`: step-size dual averaging throughout, metric
/// re-estimation at the end of every slow window (with a fresh step-size
/// search and a restarted averager), and a term buffer with the metric frozen.
pub fn adapt<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    init: PhasePoint,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Adapted> {
    config.validate()?;
    let schedule = config.schedule()?;
    let dim = init.position.len();
    let mut inv_metric = vec![1.0; dim];
    let mut z = init;
    let mut stepsize = find_reasonable_stepsize(target, &z, config.initial_stepsize, &inv_metric, rng)?;
    let mut averager = DualAveraging::new(config.target_accept, stepsize);
    let mut window = Welford::new(dim);
    let mut warmup_stats = Vec::with_capacity(schedule.total);
    let mut trace = Vec::with_capacity(schedule.total);

    for it in 0..schedule.total {
        let (next, stats) = nuts_draw(target, &z, stepsize, &inv_metric, rng, config)?;
        z = next;
        warmup_stats.push(stats);
        stepsize = averager.update(stats.accept_stat);
        trace.push(averager.log_stepsize_bar());

        match schedule.phase(it) {
            Phase::InitBuffer | Phase::TermBuffer => {}
            Phase::Window(w) => {
                window.push(&z.position);
                if it + 1 == schedule.window_ends[w] {
                    inv_metric = window.regularized_variance();
                    window = Welford::new(dim);
                    stepsize = find_reasonable_stepsize(target, &z, stepsize, &inv_metric, rng)?;
                    averager.restart(stepsize);
                }
            }
        }
    }

    let stepsize = averager.final_stepsize();
    if !(stepsize > 0.0) || !stepsize.is_finite() {
        return Err(Error::domain(format!("adapted step size {stepsize} is not positive and finite")));
    }
    Ok(Adapted {
        stepsize,
        inv_metric,
        point: z,
        warmup_stats,
        log_stepsize_bar: trace,
        schedule,
    })
}
