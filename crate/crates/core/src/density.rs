//! Differentiable log densities consumed by the inference engines.

/// A log density over `R^dim` with gradient and Hessian-vector products.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and writes `∇ log p(x)` into `grad`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_grad(x, &mut g)
    }

    /// Writes `H(x) v` into `out`, where `H` is the Hessian of `log p`.
    ///
    /// The default is a central difference of the exact gradient with step
    /// `1e-5 / |v|`; implementors with exact second derivatives override it.
    fn hessian_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            out.fill(0.0);
            return;
        }
        let h = 1e-5 / norm;
        let shifted = |sign: f64| -> Vec<f64> {
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + sign * h * b).collect();
            let mut g = vec![0.0; x.len()];
            self.log_density_and_grad(&y, &mut g);
            g
        };
        let (gp, gm) = (shifted(1.0), shifted(-1.0));
        for (o, (a, b)) in out.iter_mut().zip(gp.iter().zip(&gm)) {
            *o = (a - b) / (2.0 * h);
        }
    }

    /// Gradient and `H v` together; targets whose HVP already yields the
    /// gradient override this to avoid a second pass.
    fn grad_and_hessian_vector(&self, x: &[f64], v: &[f64], grad: &mut [f64], out: &mut [f64]) {
        self.log_density_and_grad(x, grad);
        self.hessian_vector(x, v, out);
    }
}

/// Independent Gaussian target.
#[derive(Debug, Clone)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl LogDensity for DiagGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / self.sd[i];
            lp += -0.5 * z * z - self.sd[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            grad[i] = -z / self.sd[i];
        }
        lp
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = -v[i] / (self.sd[i] * self.sd[i]);
        }
    }
}

/// Gaussian target given by mean and precision matrix (unnormalized).
#[derive(Debug, Clone)]
pub struct DenseGaussian {
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
}

impl DenseGaussian {
    /// Bivariate standard-normal marginals with correlation `rho`.
    pub fn correlated_pair(rho: f64) -> Self {
        let det = 1.0 - rho * rho;
        Self {
            mean: vec![0.0, 0.0],
            precision: vec![vec![1.0 / det, -rho / det], vec![-rho / det, 1.0 / det]],
        }
    }
}

impl LogDensity for DenseGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut quad = 0.0;
        for (i, row) in self.precision.iter().enumerate() {
            let pr: f64 = row.iter().zip(&r).map(|(p, ri)| p * ri).sum();
            grad[i] = -pr;
            quad += r[i] * pr;
        }
        -0.5 * quad
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.precision) {
            *o = -row.iter().zip(v).map(|(p, vi)| p * vi).sum::<f64>();
        }
    }
}

/// `log p ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct Flat(pub usize);

impl LogDensity for Flat {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_and_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        0.0
    }

    fn hessian_vector(&self, _x: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}
