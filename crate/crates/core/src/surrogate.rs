//! Chaotic surrogate systems standing in for model runs and for reality.
//!
//! Trajectories are integrated with fixed-step RK4, the burn-in is dropped,
//! and consecutive blocks of `aggregate` samples are averaged into one
//! output month. Each state component becomes one panel variable.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::timeseries::{inject_noise, month_index, SeriesPanel};

/// First month of every surrogate panel.
pub fn epoch() -> i64 {
    month_index(1960, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// `theta = [sigma, rho, beta]`.
    Lorenz63,
    /// `theta = [forcing]` on a ring of `sites` variables.
    Lorenz96 { sites: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub system: System,
    pub theta: Vec<f64>,
    pub dt: f64,
    /// Total RK4 steps, burn-in included.
    pub steps: usize,
    pub burn_in: usize,
    /// Samples averaged into one output row.
    pub aggregate: usize,
}

impl DynamicsParams {
    /// Classical chaotic Lorenz-63 with `rows` output months.
    pub fn lorenz63(rows: usize) -> Self {
        let burn_in = 2000;
        let aggregate = 25;
        Self {
            system: System::Lorenz63,
            theta: vec![10.0, 28.0, 8.0 / 3.0],
            dt: 0.01,
            steps: burn_in + rows * aggregate,
            burn_in,
            aggregate,
        }
    }

    pub fn lorenz96(sites: usize, forcing: f64, rows: usize) -> Self {
        let burn_in = 2000;
        let aggregate = 5;
        Self {
            system: System::Lorenz96 { sites },
            theta: vec![forcing],
            dt: 0.01,
            steps: burn_in + rows * aggregate,
            burn_in,
            aggregate,
        }
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.system {
            System::Lorenz63 => 3,
            System::Lorenz96 { sites } => sites,
        }
    }

    pub fn variable_names(&self) -> Vec<String> {
        match self.system {
            System::Lorenz63 => vec!["x".into(), "y".into(), "z".into()],
            System::Lorenz96 { sites } => (1..=sites).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn output_rows(&self) -> usize {
        (self.steps - self.burn_in) / self.aggregate
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.system {
            System::Lorenz63 => 3,
            System::Lorenz96 { sites } => {
                if sites < 4 {
                    return Err(Error::InvalidArgument("lorenz96 needs at least 4 sites".into()));
                }
                1
            }
        };
        if self.theta.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "theta has {} components, expected {expected}",
                self.theta.len()
            )));
        }
        if !(self.dt > 0.0) || !self.theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("dt must be > 0 and theta finite".into()));
        }
        if self.steps <= self.burn_in || self.aggregate < 1 {
            return Err(Error::InvalidArgument(
                "need steps > burn_in and aggregate >= 1".into(),
            ));
        }
        Ok(())
    }

    fn derivative(&self, x: &[f64], dx: &mut [f64]) {
        match self.system {
            System::Lorenz63 => {
                let (s, r, b) = (self.theta[0], self.theta[1], self.theta[2]);
                dx[0] = s * (x[1] - x[0]);
                dx[1] = x[0] * (r - x[2]) - x[1];
                dx[2] = x[0] * x[1] - b * x[2];
            }
            System::Lorenz96 { sites } => {
                let f = self.theta[0];
                for i in 0..sites {
                    let ip1 = (i + 1) % sites;
                    let im1 = (i + sites - 1) % sites;
                    let im2 = (i + sites - 2) % sites;
                    dx[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + f;
                }
            }
        }
    }

    fn initial_state(&self, seed: u64) -> Vec<f64> {
        let mut rng = seed::sub_rng(seed, "x0", 0);
        match self.system {
            System::Lorenz63 => (0..3)
                .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
                .collect(),
            System::Lorenz96 { sites } => (0..sites)
                .map(|_| self.theta[0] + 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// Scratch space for [`rk4_step`].
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One classical fourth-order Runge-Kutta step of `x' = f(x)`, in place.
    pub fn step(&mut self, f: impl Fn(&[f64], &mut [f64]), x: &mut [f64], dt: f64) {
        let n = x.len();
        f(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Means of consecutive complete blocks of `size` samples.
pub fn aggregate_blocks(samples: &[f64], size: usize) -> Vec<f64> {
    samples
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect()
}

/// Integrates the system and returns the aggregated post-burn-in trajectory.
///
/// `x0 = None` draws the initial state from `seed`.
pub fn integrate(params: &DynamicsParams, x0: Option<&[f64]>, seed: u64) -> Result<SeriesPanel> {
    params.validate()?;
    let dim = params.state_dim();
    let mut x = match x0 {
        Some(x0) if x0.len() != dim => {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} components, expected {dim}",
                x0.len()
            )))
        }
        Some(x0) if !x0.iter().all(|v| v.is_finite()) => {
            return Err(Error::InvalidArgument("initial state must be finite".into()))
        }
        Some(x0) => x0.to_vec(),
        None => params.initial_state(seed),
    };
    let mut rk = Rk4::new(dim);
    let rows = params.output_rows();
    let mut sums = vec![vec![0.0; rows]; dim];
    for step in 1..=params.steps {
        rk.step(|s, d| params.derivative(s, d), &mut x, params.dt);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        if step > params.burn_in {
            let row = (step - params.burn_in - 1) / params.aggregate;
            if row < rows {
                for (col, v) in sums.iter_mut().zip(&x) {
                    col[row] += v;
                }
            }
        }
    }
    let scale = params.aggregate as f64;
    let columns = sums
        .into_iter()
        .map(|c| c.into_iter().map(|s| s / scale).collect())
        .collect();
    SeriesPanel::from_columns(params.variable_names(), epoch(), columns)
}

/// Draws `n` parameter sets uniformly from the closed ball
/// `|(theta - theta0) / |theta0||_2 <= radius`, i.e. with each component
/// scaled by the magnitude of the corresponding component of `theta0`.
pub fn sample_theta_ball(
    base: &DynamicsParams,
    radius: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<DynamicsParams>> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {radius}")));
    }
    let d = base.theta.len();
    let mut rng = seed::sub_rng(seed, "theta-ball", 0);
    Ok((0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
            let theta = base
                .theta
                .iter()
                .zip(&dir)
                .map(|(t0, u)| t0 + t0.abs() * r * u / norm)
                .collect();
            base.with_theta(theta)
        })
        .collect())
}

/// Scaled distance used by [`sample_theta_ball`].
pub fn scaled_distance(theta: &[f64], theta0: &[f64]) -> f64 {
    theta
        .iter()
        .zip(theta0)
        .filter(|(_, t0)| **t0 != 0.0)
        .map(|(t, t0)| ((t - t0) / t0.abs()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Seed for one trajectory. Depends on the parameters only, so identical
/// parameters integrate to identical panels.
fn run_seed(seed: u64, params: &DynamicsParams) -> u64 {
    let bits: Vec<String> = params.theta.iter().map(|t| t.to_bits().to_string()).collect();
    seed::derive_seed(seed, &format!("run:{}", bits.join(",")), 0)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model_runs: Vec<SeriesPanel>,
    pub real: SeriesPanel,
}

/// Integrates every family member and the "real" system; observation noise
/// is added to the real panel only.
pub fn make_experiment(
    family: &[DynamicsParams],
    real_params: &DynamicsParams,
    obs_noise_sd: f64,
    seed: u64,
) -> Result<Experiment> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty model family".into()));
    }
    let model_runs = family
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            integrate(p, None, run_seed(seed, p)).map_err(|e| e.context(format!("model run {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let clean = integrate(real_params, None, run_seed(seed, real_params))
        .map_err(|e| e.context("real run"))?;
    let sds = vec![obs_noise_sd; clean.variables().len()];
    let real = inject_noise(&clean, &sds, seed::derive_seed(seed, "obs-noise", 0))?;
    Ok(Experiment { model_runs, real })
}

/// Gaussian white-noise panel with the schema of `like`; an uninformative
/// stand-in for model runs.
pub fn noise_panel(like: &SeriesPanel, seed: u64) -> Result<SeriesPanel> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let columns = (0..like.variables().len())
        .map(|v| {
            let mut rng = seed::sub_rng(seed, "noise-panel", v as u64);
            (0..like.len()).map(|_| normal.sample(&mut rng)).collect()
        })
        .collect();
    SeriesPanel::from_columns(like.variables().to_vec(), like.start(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn final_state(params: &DynamicsParams, x0: &[f64]) -> Vec<f64> {
        let mut x = x0.to_vec();
        let mut rk = Rk4::new(x.len());
        for _ in 0..params.steps {
            rk.step(|s, d| params.derivative(s, d), &mut x, params.dt);
        }
        x
    }

    #[test]
    fn subcritical_rho_decays_to_origin() {
        let mut p = DynamicsParams::lorenz63(10);
        p.theta[1] = 0.5;
        p.steps = 5000;
        let x = final_state(&p, &[5.0, -3.0, 8.0]);
        assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // x' = -x on [0, 1]; global error should fall ~16x per halving.
        let err = |dt: f64| {
            let mut x = [1.0];
            let mut rk = Rk4::new(1);
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                rk.step(|s, d| d[0] = -s[0], &mut x, dt);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nearby_trajectories_separate() {
        let p = DynamicsParams::lorenz63(1);
        let mut a = vec![1.0, 1.0, 1.0];
        let mut b = vec![1.0 + 1e-8, 1.0, 1.0];
        let mut rk = Rk4::new(3);
        let mut hit = None;
        for step in 0..10_000 {
            rk.step(|s, d| p.derivative(s, d), &mut a, p.dt);
            rk.step(|s, d| p.derivative(s, d), &mut b, p.dt);
            let sep: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            if sep > 1.0 {
                hit = Some(step);
                break;
            }
        }
        assert!(hit.is_some());
    }

    #[test]
    fn attractor_stays_bounded() {
        let panel = integrate(&DynamicsParams::lorenz63(400), None, 3).unwrap();
        for t in panel.times() {
            let r: f64 = (0..3).map(|v| panel.get(v, t).unwrap().powi(2)).sum::<f64>().sqrt();
            assert!(r < 100.0);
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let p = DynamicsParams::lorenz63(50);
        assert_eq!(integrate(&p, None, 9).unwrap(), integrate(&p, None, 9).unwrap());
        assert_ne!(integrate(&p, None, 9).unwrap(), integrate(&p, None, 10).unwrap());
    }

    #[test]
    fn aggregation_composes() {
        let s: Vec<f64> = (0..120).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let a = aggregate_blocks(&s, 5);
        let pairs = aggregate_blocks(&a, 2);
        let direct = aggregate_blocks(&s, 10);
        for (u, v) in pairs.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_matches_block_means() {
        let mut p = DynamicsParams::lorenz63(4);
        p.aggregate = 3;
        p.burn_in = 10;
        p.steps = 10 + 12;
        let x0 = [1.0, 2.0, 3.0];
        let panel = integrate(&p, Some(&x0), 0).unwrap();
        let mut x = x0.to_vec();
        let mut rk = Rk4::new(3);
        let mut xs = Vec::new();
        for step in 1..=p.steps {
            rk.step(|s, d| p.derivative(s, d), &mut x, p.dt);
            if step > p.burn_in {
                xs.push(x[0]);
            }
        }
        let expect = aggregate_blocks(&xs, 3);
        assert_eq!(panel.column(0).len(), 4);
        for (u, v) in panel.column(0).iter().zip(&expect) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let mut p = DynamicsParams::lorenz63(10);
        p.dt = 5.0;
        assert!(matches!(integrate(&p, Some(&[1.0, 1.0, 1.0]), 0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_radius_ball_repeats_theta0() {
        let base = DynamicsParams::lorenz63(10);
        let family = sample_theta_ball(&base, 0.0, 4, 1).unwrap();
        assert!(family.iter().all(|p| p.theta == base.theta));
        assert!(sample_theta_ball(&base, -0.1, 4, 1).is_err());
    }

    #[test]
    fn ball_membership_and_centre() {
        let base = DynamicsParams::lorenz63(10);
        let radius = 0.05;
        let family = sample_theta_ball(&base, radius, 1000, 42).unwrap();
        for p in &family {
            assert!(scaled_distance(&p.theta, &base.theta) <= radius + 1e-12);
        }
        // Uniform in a 3-ball: each scaled component has variance r^2 / (d + 2).
        let se = radius / 5f64.sqrt() / (1000f64).sqrt();
        for j in 0..3 {
            let mean = family.iter().map(|p| p.theta[j]).sum::<f64>() / 1000.0;
            let z = (mean - base.theta[j]) / base.theta[j].abs();
            assert!(z.abs() < 3.0 * se, "component {j}: {z}");
        }
    }

    #[test]
    fn experiment_shapes_and_identity() {
        let base = DynamicsParams::lorenz63(40);
        let mut family = sample_theta_ball(&base, 0.01, 4, 5).unwrap();
        family.push(base.clone());
        let exp = make_experiment(&family, &base, 0.0, 5).unwrap();
        assert_eq!(exp.model_runs.len(), 5);
        assert!(exp.model_runs.iter().all(|r| r.variables() == exp.real.variables()));
        assert_eq!(exp.real, exp.model_runs[4]);
        let noisy = make_experiment(&family, &base, 0.5, 5).unwrap();
        assert_ne!(noisy.real, noisy.model_runs[4]);
        assert_eq!(noisy.model_runs[0], exp.model_runs[0]);
    }

    #[test]
    fn lorenz96_runs() {
        let p = DynamicsParams::lorenz96(5, 8.0, 30);
        let panel = integrate(&p, None, 1).unwrap();
        assert_eq!(panel.variables().len(), 5);
        assert_eq!(panel.len(), 30);
    }
}
