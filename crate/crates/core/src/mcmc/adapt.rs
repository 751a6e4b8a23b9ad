//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(target_accept: f64, step_size: f64) -> Self {
        Self {
            target: target_accept,
            mu: (10.0 * step_size).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        }
    }

    /// Feeds one acceptance statistic; returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept_stat.clamp(0.0, 1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Averaged step size used after warmup.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variances shrunk toward `1e-3`:
    /// `n/(n+5)·var + 1e-3·5/(n+5)`.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup schedule: an initial fast phase (15%), doubling slow windows
/// starting at 25 iterations (75%), and a final fast phase (10%).
#[derive(Debug, Clone, PartialEq)]
pub struct WarmupSchedule {
    pub slow_start: usize,
    /// Exclusive end iterations of each metric window.
    pub window_ends: Vec<usize>,
}

pub const BASE_WINDOW: usize = 25;

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return Self {
                slow_start: warmup,
                window_ends: Vec::new(),
            };
        }
        let init = (0.15 * warmup as f64).floor() as usize;
        let term = (0.10 * warmup as f64).floor() as usize;
        let last = warmup - term;
        let mut ends = Vec::new();
        let mut start = init;
        let mut size = BASE_WINDOW.min(last - init);
        loop {
            let mut end = start + size;
            if end + 2 * size > last {
                end = last;
            }
            ends.push(end);
            if end == last {
                break;
            }
            start = end;
            size *= 2;
        }
        Self {
            slow_start: init,
            window_ends: ends,
        }
    }

    pub fn in_slow_phase(&self, iter: usize) -> bool {
        self.window_ends.last().is_some_and(|&last| iter >= self.slow_start && iter < last)
    }

    pub fn closes_window(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}
