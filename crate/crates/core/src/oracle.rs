//! Synthetic convex landscapes where every sample-wise optimum is known, so
//! the optima-density quantity Ψ, the path-cosine quantity Θ and the bounds
//! built on them can be evaluated exactly.
//!
//! Sample `i` has loss `½ a_i ‖θ − θ*_i‖²`. With scalar curvatures the
//! minimizer of the mean loss is the curvature-weighted mean of the optima,
//! which always lies in their convex hull.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadLandscape {
    pub optima: Vec<Vec<f64>>,
    pub curvatures: Vec<f64>,
    pub theta0: Vec<f64>,
    /// Step size of the one-step approximation; `None` means 1/H.
    pub eta: Option<f64>,
}

impl QuadLandscape {
    pub fn new(optima: Vec<Vec<f64>>, curvatures: Vec<f64>, theta0: Vec<f64>) -> Result<Self> {
        if optima.is_empty() || optima.len() != curvatures.len() {
            return Err(Error::InvalidArgument(format!(
                "{} optima with {} curvatures",
                optima.len(),
                curvatures.len()
            )));
        }
        let dim = theta0.len();
        if dim == 0 || optima.iter().any(|o| o.len() != dim) {
            return Err(Error::InvalidArgument("optima and theta0 must share a positive dimension".into()));
        }
        if curvatures.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("curvatures must be positive and finite".into()));
        }
        if optima.iter().flatten().chain(&theta0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landscape coordinates".into()));
        }
        Ok(QuadLandscape { optima, curvatures, theta0, eta: None })
    }

    /// Same curvature for every sample.
    pub fn uniform(optima: Vec<Vec<f64>>, curvature: f64, theta0: Vec<f64>) -> Result<Self> {
        let n = optima.len();
        Self::new(optima, vec![curvature; n], theta0)
    }

    pub fn n(&self) -> usize {
        self.optima.len()
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Smoothness bound: the largest curvature.
    pub fn h(&self) -> f64 {
        self.curvatures.iter().copied().fold(0.0, f64::max)
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(1.0 / self.h())
    }

    pub fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        0.5 * self.curvatures[i] * sq_dist(theta, &self.optima[i])
    }

    /// Mean of the sample losses at `theta`.
    pub fn train_loss(&self, theta: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.sample_loss(i, theta)).sum::<f64>() / self.n() as f64
    }

    /// Gradient of sample `i` at θ0.
    pub fn sample_gradient(&self, i: usize) -> Vec<f64> {
        let a = self.curvatures[i];
        sub(&self.theta0, &self.optima[i]).into_iter().map(|v| a * v).collect()
    }
}

/// (√H / n²) Σ_{i,j} ‖θ*_i − θ*_j‖₁
pub fn psi(l: &QuadLandscape) -> f64 {
    let n = l.n();
    let mut total = 0.0;
    for a in &l.optima {
        for b in &l.optima {
            total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        }
    }
    l.h().sqrt() * total / (n * n) as f64
}

/// (H α² / n) Σ_{i,j} (α/β − cos(v_i, v_j)) over vectors `v_i`, where α and β
/// are the largest and smallest ‖v_i‖.
fn theta_of_paths(h: f64, paths: &[Vec<f64>], what: &str) -> Result<f64> {
    let sq: Vec<f64> = paths.iter().map(|p| dot(p, p)).collect();
    let norms: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Degenerate(format!("{what} {i} has zero length")));
    }
    let alpha = norms.iter().copied().fold(0.0, f64::max);
    let beta = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let n = paths.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            // sqrt of the product keeps cos(v, v) exactly 1
            total += alpha / beta - dot(&paths[i], &paths[j]) / (sq[i] * sq[j]).sqrt();
        }
    }
    Ok(h * alpha * alpha * total / n as f64)
}

/// Θ from the exact optimization paths θ*_i − θ0.
pub fn theta_exact(l: &QuadLandscape) -> Result<f64> {
    let paths: Vec<Vec<f64>> = l.optima.iter().map(|o| sub(o, &l.theta0)).collect();
    theta_of_paths(l.h(), &paths, "path to optimum")
}

/// Θ with each optimum replaced by one gradient step θ0 − η g_i. The path
/// lengths become η‖g_i‖, so this equals (H η² g_max² / n) Σ (g_max/g_min − cos(g_i, g_j)).
pub fn theta_first_order(l: &QuadLandscape) -> Result<f64> {
    let eta = l.eta();
    let steps: Vec<Vec<f64>> = (0..l.n())
        .map(|i| l.sample_gradient(i).into_iter().map(|g| -eta * g).collect())
        .collect();
    theta_of_paths(l.h(), &steps, "gradient")
}

/// Minimizer of the mean loss, written as an offset from the first optimum so
/// coincident optima reproduce it exactly.
pub fn overall_optimum(l: &QuadLandscape) -> Vec<f64> {
    let total: f64 = l.curvatures.iter().sum();
    let base = &l.optima[0];
    let mut out = base.clone();
    for (o, &a) in l.optima.iter().zip(&l.curvatures).skip(1) {
        for (k, v) in out.iter_mut().enumerate() {
            *v += a * (o[k] - base[k]) / total;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2 {
    pub loss: f64,
    pub theta: f64,
    pub holds: bool,
}

/// Training loss at the overall optimum against Θ.
pub fn theorem2_check(l: &QuadLandscape) -> Result<Theorem2> {
    let theta = theta_exact(l)?;
    let loss = l.train_loss(&overall_optimum(l));
    Ok(Theorem2 { loss, theta, holds: loss <= theta + 1e-12 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderGap {
    pub exact: f64,
    pub approx: f64,
    /// |exact − approx| / max(exact, 1e-12)
    pub gap: f64,
}

pub fn first_order_gap(l: &QuadLandscape) -> Result<FirstOrderGap> {
    let exact = theta_exact(l)?;
    let approx = theta_first_order(l)?;
    Ok(FirstOrderGap { exact, approx, gap: (exact - approx).abs() / exact.max(1e-12) })
}

/// Random landscape: θ0 and the optima are standard normal draws, curvatures
/// uniform in `curv`.
pub fn random_landscape(rng: &mut ChaCha8Rng, n: usize, dim: usize, curv: (f64, f64)) -> Result<QuadLandscape> {
    let mut normal = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let theta0 = normal(dim);
    let optima: Vec<Vec<f64>> = (0..n).map(|_| normal(dim)).collect();
    let curvatures = (0..n)
        .map(|_| if curv.0 == curv.1 { curv.0 } else { rng.random_range(curv.0..curv.1) })
        .collect();
    QuadLandscape::new(optima, curvatures, theta0)
}

/// Two landscapes with the same optima, (1, 0) and (0, 1), seen from
/// different starting points. Ψ ignores θ0; Θ does not.
pub fn contrast_fixture() -> (QuadLandscape, QuadLandscape) {
    let optima = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let a = QuadLandscape::uniform(optima.clone(), 1.0, vec![0.0, 0.0]).expect("valid fixture");
    let b = QuadLandscape::uniform(optima, 1.0, vec![0.5, 0.0]).expect("valid fixture");
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub id: usize,
    pub n: usize,
    pub dim: usize,
    pub loss: f64,
    pub theta: f64,
    pub psi: f64,
    pub holds: bool,
    pub gap: f64,
}

/// Theorem 2 and the first-order gap over `count` random landscapes with
/// n in 1..=max_n and dim in 1..=max_dim.
pub fn sweep(count: usize, max_n: usize, max_dim: usize, curv: (f64, f64), seed: u64) -> Result<Vec<SweepRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    for id in 0..count {
        let n = rng.random_range(1..=max_n);
        let dim = rng.random_range(1..=max_dim);
        let l = random_landscape(&mut rng, n, dim, curv)?;
        let t2 = theorem2_check(&l)?;
        rows.push(SweepRow {
            id,
            n,
            dim,
            loss: t2.loss,
            theta: t2.theta,
            psi: psi(&l),
            holds: t2.holds,
            gap: first_order_gap(&l)?.gap,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(["id", "n", "dim", "L", "Theta", "Psi", "holds", "gap"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.n.to_string(),
            r.dim.to_string(),
            r.loss.to_string(),
            r.theta.to_string(),
            r.psi.to_string(),
            r.holds.to_string(),
            r.gap.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Generalization setting: every sample (training or held-out) has curvature
/// `curvature` and an optimum drawn from N(mean, spread² I).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    pub n: usize,
    pub mean: Vec<f64>,
    pub spread: f64,
    pub curvature: f64,
    pub theta0: Vec<f64>,
    pub delta: f64,
}

impl OracleInstance {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidArgument(format!("delta {} outside (0, 1]", self.delta)));
        }
        if self.n == 0 || self.mean.is_empty() || self.mean.len() != self.theta0.len() {
            return Err(Error::InvalidArgument("need n >= 1 and matching dimensions".into()));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) || !(self.curvature > 0.0) {
            return Err(Error::InvalidArgument("spread must be >= 0 and curvature > 0".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.mean
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.spread * z
            })
            .collect()
    }

    /// Var over held-out optima of ‖θ* − θ*_u‖², exactly: with c = θ* − μ and
    /// s the spread, 2 d s⁴ + 4 s² ‖c‖².
    pub fn sigma2(&self, theta_star: &[f64]) -> f64 {
        let s2 = self.spread * self.spread;
        let d = self.mean.len() as f64;
        2.0 * d * s2 * s2 + 4.0 * s2 * sq_dist(theta_star, &self.mean)
    }

    /// Expected held-out loss at `theta_star`: (a/2)(‖θ* − μ‖² + d s²).
    pub fn population_loss(&self, theta_star: &[f64]) -> f64 {
        0.5 * self.curvature * (sq_dist(theta_star, &self.mean) + self.mean.len() as f64 * self.spread * self.spread)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3 {
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    /// Largest |Monte-Carlo − closed-form| population loss, relative.
    pub mc_error: f64,
}

/// Fraction of trials in which the Monte-Carlo population loss exceeds
/// Θ + σ/√(nδ). Each trial draws a fresh training set and `mc_samples`
/// held-out optima.
pub fn theorem3_check(inst: &OracleInstance, trials: usize, mc_samples: usize, seed: u64) -> Result<Theorem3> {
    inst.validate()?;
    if trials == 0 || mc_samples == 0 {
        return Err(Error::InvalidArgument("trials and mc_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut mc_error: f64 = 0.0;
    for _ in 0..trials {
        let optima: Vec<Vec<f64>> = (0..inst.n).map(|_| inst.draw(&mut rng)).collect();
        let l = QuadLandscape::uniform(optima, inst.curvature, inst.theta0.clone())?;
        let theta = theta_exact(&l)?;
        let star = overall_optimum(&l);
        let mut pop = 0.0;
        for _ in 0..mc_samples {
            pop += 0.5 * inst.curvature * sq_dist(&star, &inst.draw(&mut rng));
        }
        pop /= mc_samples as f64;
        let exact = inst.population_loss(&star);
        mc_error = mc_error.max((pop - exact).abs() / exact.max(1e-12));
        let bound = theta + (inst.sigma2(&star) / (inst.n as f64 * inst.delta)).sqrt();
        if pop > bound + 1e-12 {
            violations += 1;
        }
    }
    Ok(Theorem3 { trials, violations, rate: violations as f64 / trials as f64, mc_error })
}
