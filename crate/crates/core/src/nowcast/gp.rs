//! Zero-mean Gaussian-process regression with a sum of Matérn-3/2 kernels.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// `σ²(1 + √3r/l)·exp(-√3r/l)`.
pub fn matern32(r: f64, length_scale: f64, sigma2: f64) -> f64 {
    let a = SQRT3 * r / length_scale;
    sigma2 * (1.0 + a) * (-a).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternComponent {
    pub length_scale: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// Estimated with the kernel hyperparameters.
    Fit,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    pub n_kernels: usize,
    pub restarts: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub max_iter: usize,
}

impl GpOptions {
    pub fn new(n_kernels: usize, seed: u64) -> Self {
        GpOptions {
            n_kernels,
            restarts: 8,
            seed,
            noise: NoiseSpec::Fit,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    /// `None` if every evaluation from this start failed.
    pub log_marginal_likelihood: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpModel {
    kernels: Vec<MaternComponent>,
    noise_variance: f64,
    /// Diagonal jitter that was needed for a stable Cholesky factor.
    jitter: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    log_marginal_likelihood: f64,
    starts: Vec<StartReport>,
    #[serde(skip)]
    chol: DMatrix<f64>,
    #[serde(skip)]
    alpha: DVector<f64>,
}

#[derive(Deserialize)]
struct GpData {
    kernels: Vec<MaternComponent>,
    noise_variance: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    #[serde(default)]
    starts: Vec<StartReport>,
}

impl<'de> Deserialize<'de> for GpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = GpData::deserialize(d)?;
        let mut model = GpModel::new(data.inputs, data.targets, data.kernels, data.noise_variance)
            .map_err(serde::de::Error::custom)?;
        model.starts = data.starts;
        Ok(model)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn distances(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| distance(&x[i], &x[j]))
}

fn validate_inputs(x: &[Vec<f64>], y: &[f64], min_n: usize) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min_n {
        return Err(Error::TooShort { needed: min_n, got: x.len() });
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::invalid("inputs need at least one dimension"));
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: row.len() });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("inputs and targets must be finite"));
    }
    Ok(d)
}

fn gram(r: &DMatrix<f64>, kernels: &[MaternComponent]) -> DMatrix<f64> {
    r.map(|d| kernels.iter().map(|k| matern32(d, k.length_scale, k.variance)).sum())
}

/// Cholesky of `k + noise·I`, escalating diagonal jitter when needed.
fn factor(k: &DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    let scale = (k.trace() / n as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for step in 0..8 {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise + jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        jitter = scale * 10f64.powi(step - 12);
    }
    Err(Error::NotPositiveDefinite)
}

fn solve_chol(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("non-singular factor");
    l.transpose().solve_upper_triangular(&z).expect("non-singular factor")
}

fn lml_from(l: &DMatrix<f64>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    -0.5 * y.dot(alpha)
        - l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

impl GpModel {
    /// Conditions a GP with the given hyperparameters on `(x, y)`.
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        kernels: Vec<MaternComponent>,
        noise_variance: f64,
    ) -> Result<Self> {
        validate_inputs(&x, &y, 1)?;
        if kernels.is_empty() {
            return Err(Error::invalid("at least one kernel is required"));
        }
        if kernels
            .iter()
            .any(|k| !(k.length_scale > 0.0 && k.variance > 0.0 && k.length_scale.is_finite() && k.variance.is_finite()))
        {
            return Err(Error::invalid("kernel length scales and variances must be positive"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        let k = gram(&distances(&x), &kernels);
        let (chol, jitter) = factor(&k, noise_variance)?;
        let yv = DVector::from_column_slice(&y);
        let alpha = solve_chol(&chol, &yv);
        let log_marginal_likelihood = lml_from(&chol, &yv, &alpha);
        Ok(GpModel {
            kernels,
            noise_variance,
            jitter,
            inputs: x,
            targets: y,
            log_marginal_likelihood,
            starts: Vec::new(),
            chol,
            alpha,
        })
    }

    /// Maximises the log marginal likelihood over kernel length scales,
    /// variances and (optionally) the noise variance, from `opts.restarts`
    /// seeded starting points in log space.
    pub fn fit(x: &[Vec<f64>], y: &[f64], opts: &GpOptions) -> Result<Self> {
        validate_inputs(x, y, 3)?;
        if opts.n_kernels == 0 {
            return Err(Error::invalid("n_kernels must be at least 1"));
        }
        if let NoiseSpec::Fixed(v) = opts.noise {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("noise variance must be non-negative"));
            }
        }
        let problem = Problem::new(x, y, opts);
        let starts = opts.restarts.max(1);
        let results: Vec<(Option<(Vec<f64>, f64)>, usize)> = (0..starts)
            .into_par_iter()
            .map(|i| problem.optimise(problem.start(i, opts.seed), opts.max_iter))
            .collect();
        let mut best: Option<(usize, &Vec<f64>, f64)> = None;
        for (i, (res, _)) in results.iter().enumerate() {
            if let Some((theta, f)) = res {
                if best.is_none_or(|(_, _, bf)| *f < bf) {
                    best = Some((i, theta, *f));
                }
            }
        }
        let (_, theta, _) = best.ok_or(Error::NotPositiveDefinite)?;
        let (mut kernels, noise) = problem.unpack(theta);
        kernels.sort_by(|a, b| a.length_scale.total_cmp(&b.length_scale));
        let mut model = GpModel::new(x.to_vec(), y.to_vec(), kernels, noise)?;
        model.starts = results
            .iter()
            .map(|(res, iterations)| StartReport {
                log_marginal_likelihood: res.as_ref().map(|(_, f)| -f),
                iterations: *iterations,
            })
            .collect();
        Ok(model)
    }

    pub fn kernels(&self) -> &[MaternComponent] {
        &self.kernels
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn starts(&self) -> &[StartReport] {
        &self.starts
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn prior_variance(&self) -> f64 {
        self.kernels.iter().map(|k| k.variance).sum()
    }

    fn k_star(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| {
                let r = distance(xi, x);
                self.kernels.iter().map(|k| matern32(r, k.length_scale, k.variance)).sum::<f64>()
            }),
        )
    }

    /// Posterior mean and variance of the latent function at each row of
    /// `x_star`.
    pub fn predict(&self, x_star: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.input_dim();
        if let Some(row) = x_star.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        let prior = self.prior_variance();
        let (mut mean, mut var) = (Vec::with_capacity(x_star.len()), Vec::with_capacity(x_star.len()));
        for x in x_star {
            let ks = self.k_star(x);
            mean.push(ks.dot(&self.alpha));
            let v = self.chol.solve_lower_triangular(&ks).expect("non-singular factor");
            var.push((prior - v.norm_squared()).clamp(0.0, prior));
        }
        Ok((mean, var))
    }
}

/// The optimisation problem in log space: per kernel `[ln l, ln σ²]`,
/// then `ln σ_n²` when the noise is fitted.
struct Problem {
    y: DVector<f64>,
    r: DMatrix<f64>,
    n_kernels: usize,
    noise: NoiseSpec,
    lower: Vec<f64>,
    upper: Vec<f64>,
    dmin: f64,
    dmax: f64,
    scale: f64,
}

impl Problem {
    fn new(x: &[Vec<f64>], y: &[f64], opts: &GpOptions) -> Self {
        let r = distances(x);
        let positive: Vec<f64> = r.iter().copied().filter(|&d| d > 0.0).collect();
        let (dmin, dmax) = if positive.is_empty() {
            (1.0, 1.0)
        } else {
            (
                positive.iter().copied().fold(f64::INFINITY, f64::min),
                positive.iter().copied().fold(0.0, f64::max),
            )
        };
        let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let scale = if ms > 0.0 { ms } else { 1.0 };
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for _ in 0..opts.n_kernels {
            lower.extend([(dmin / 10.0).ln(), (scale * 1e-6).ln()]);
            upper.extend([(dmax * 10.0).ln(), (scale * 1e3).ln()]);
        }
        if opts.noise == NoiseSpec::Fit {
            lower.push((scale * 1e-8).ln());
            upper.push((scale * 10.0).ln());
        }
        Problem {
            y: DVector::from_column_slice(y),
            r,
            n_kernels: opts.n_kernels,
            noise: opts.noise,
            lower,
            upper,
            dmin,
            dmax,
            scale,
        }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn start(&self, index: usize, seed: u64) -> Vec<f64> {
        if index == 0 {
            let k = self.n_kernels;
            let mut theta = Vec::new();
            for i in 0..k {
                let frac = (i + 1) as f64 / (k + 1) as f64;
                let l = self.dmin * (self.dmax / self.dmin).max(10.0).powf(frac);
                theta.extend([l.ln(), (self.scale / k as f64).ln()]);
            }
            if self.noise == NoiseSpec::Fit {
                theta.push((0.1 * self.scale).ln());
            }
            self.clamp(&mut theta);
            return theta;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        (0..self.dim())
            .map(|i| rng.random_range(self.lower[i]..=self.upper[i]))
            .collect()
    }

    fn unpack(&self, theta: &[f64]) -> (Vec<MaternComponent>, f64) {
        let kernels = (0..self.n_kernels)
            .map(|i| MaternComponent {
                length_scale: theta[2 * i].exp(),
                variance: theta[2 * i + 1].exp(),
            })
            .collect();
        let noise = match self.noise {
            NoiseSpec::Fit => theta[2 * self.n_kernels].exp(),
            NoiseSpec::Fixed(v) => v,
        };
        (kernels, noise)
    }

    /// Negative log marginal likelihood and its gradient in log space.
    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (kernels, noise) = self.unpack(theta);
        let k = gram(&self.r, &kernels);
        let (l, _) = factor(&k, noise).ok()?;
        let alpha = solve_chol(&l, &self.y);
        let f = -lml_from(&l, &self.y, &alpha);
        if !f.is_finite() {
            return None;
        }
        let n = self.y.len();
        let kinv = {
            let linv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
            linv.transpose() * linv
        };
        // W = ααᵀ - K⁻¹, so ∂lml/∂θ = ½ Σ W ∘ ∂K/∂θ.
        let w = &alpha * alpha.transpose() - kinv;
        let mut grad = Vec::with_capacity(self.dim());
        for kern in &kernels {
            let (mut g_l, mut g_s) = (0.0, 0.0);
            for j in 0..n {
                for i in 0..n {
                    let a = SQRT3 * self.r[(i, j)] / kern.length_scale;
                    let e = (-a).exp();
                    g_l += w[(i, j)] * kern.variance * a * a * e;
                    g_s += w[(i, j)] * kern.variance * (1.0 + a) * e;
                }
            }
            grad.extend([-0.5 * g_l, -0.5 * g_s]);
        }
        if self.noise == NoiseSpec::Fit {
            grad.push(-0.5 * noise * w.trace());
        }
        Some((f, grad))
    }

    /// Box-constrained BFGS. Returns the best point and objective (or
    /// `None` if no evaluation succeeded) with the iteration count.
    fn optimise(&self, mut x: Vec<f64>, max_iter: usize) -> (Option<(Vec<f64>, f64)>, usize) {
        let dim = self.dim();
        let Some((mut f, mut g)) = self.evaluate(&x) else {
            return (None, 0);
        };
        let mut h = DMatrix::<f64>::identity(dim, dim);
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let free: Vec<bool> = (0..dim)
                .map(|i| !((x[i] <= self.lower[i] && g[i] > 0.0) || (x[i] >= self.upper[i] && g[i] < 0.0)))
                .collect();
            let pg_norm = (0..dim).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
            if pg_norm < 1e-6 {
                break;
            }
            let gv = DVector::from_iterator(dim, (0..dim).map(|i| if free[i] { g[i] } else { 0.0 }));
            let mut d = -(&h * &gv);
            for i in 0..dim {
                if !free[i] {
                    d[i] = 0.0;
                }
            }
            if d.dot(&gv) >= 0.0 {
                h.fill_with_identity();
                d = -gv.clone();
            }
            let longest = d.amax();
            if longest > 3.0 {
                d *= 3.0 / longest;
            }
            let mut t = 1.0;
            let accepted = loop {
                let mut trial: Vec<f64> = (0..dim).map(|i| x[i] + t * d[i]).collect();
                self.clamp(&mut trial);
                let step: f64 = (0..dim).map(|i| g[i] * (trial[i] - x[i])).sum();
                if let Some((ft, gt)) = self.evaluate(&trial) {
                    if ft <= f + 1e-4 * step {
                        break Some((trial, ft, gt));
                    }
                }
                t *= 0.5;
                if t < 1e-10 {
                    break None;
                }
            };
            let Some((xn, fn_, gn)) = accepted else { break };
            let s = DVector::from_iterator(dim, (0..dim).map(|i| xn[i] - x[i]));
            let yv = DVector::from_iterator(dim, (0..dim).map(|i| gn[i] - g[i]));
            let sy = s.dot(&yv);
            if sy > 1e-12 * s.norm() * yv.norm() {
                let rho = 1.0 / sy;
                let i_m = DMatrix::<f64>::identity(dim, dim);
                let a = &i_m - rho * &s * yv.transpose();
                h = &a * &h * a.transpose() + rho * &s * s.transpose();
            }
            let done = (f - fn_).abs() < 1e-12 * (1.0 + f.abs());
            x = xn;
            f = fn_;
            g = gn;
            if done {
                break;
            }
        }
        (Some((x, f)), iterations)
    }
}
