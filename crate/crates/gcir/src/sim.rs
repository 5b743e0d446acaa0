//! Positivity-preserving discretization and Monte Carlo estimation.

use crate::model::ModelParams;
use crate::rng::PathNoise;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Euler variants that keep the state nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `X' = |X + (alpha - delta X) dt + X^h dB|`
    ReflectedEuler,
    /// `X' = max(0, X + (alpha - delta X) dt + X^h dB)`
    AbsorbedDriftEuler,
}

impl Scheme {
    #[inline]
    pub(crate) fn step(self, params: &ModelParams, x: f64, dt: f64, db: f64) -> f64 {
        let drift = params.alpha() - params.delta() * x;
        let proposal = x + drift * dt + x.powf(params.h()) * db;
        match self {
            Scheme::ReflectedEuler => proposal.abs(),
            Scheme::AbsorbedDriftEuler => proposal.max(0.0),
        }
    }
}

/// Simulation shape: horizon, grid, ensemble size, seed, scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(horizon: f64, n_steps: usize, n_paths: usize, seed: u64, scheme: Scheme) -> Self {
        Self {
            horizon,
            n_steps,
            n_paths,
            seed,
            scheme,
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_paths == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_steps = {} and n_paths = {} must both be positive",
                self.n_steps, self.n_paths
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MCEstimate {
    /// Sample mean and `sd / sqrt(n)` with the n-1 variance denominator.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n >= 2, "need at least two samples");
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|&x| (x - mean) * (x - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        Self {
            mean,
            std_error: sd / (n as f64).sqrt(),
            n,
        }
    }

    /// Half-width of the `z`-sigma interval.
    pub fn margin(&self, z: f64) -> f64 {
        z * self.std_error
    }
}

/// A seeded ensemble of discretized trajectories, path-major storage.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    start: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    n_paths: usize,
    increments_id: u64,
}

impl PathEnsemble {
    pub fn start(&self) -> f64 {
        self.start
    }

    /// Time grid, `n_steps + 1` points.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// Seed-derived identifier; ensembles sharing it share increments.
    pub fn increments_id(&self) -> u64 {
        self.increments_id
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[path * w..(path + 1) * w]
    }

    pub fn value(&self, path: usize, step: usize) -> f64 {
        self.values[path * self.grid.len() + step]
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| self.value(p, self.grid.len() - 1))
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Dump as CSV with header `path_id,step,t,x`.
    pub fn write_csv<W: Write>(&self, mut w: W, max_paths: Option<usize>) -> io::Result<()> {
        writeln!(w, "path_id,step,t,x")?;
        let limit = max_paths.unwrap_or(self.n_paths).min(self.n_paths);
        for p in 0..limit {
            for (k, &t) in self.grid.iter().enumerate() {
                writeln!(w, "{p},{k},{t},{}", self.value(p, k))?;
            }
        }
        Ok(())
    }
}

/// Simulate the full ensemble. Memory is `n_paths * (n_steps + 1)` doubles;
/// use [`terminal_values`] when only the endpoint matters.
pub fn simulate_ensemble(
    params: &ModelParams,
    x0: f64,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    config.validate()?;
    if !(x0 >= 0.0) {
        return Err(Error::NegativeInput {
            name: "x0",
            value: x0,
        });
    }
    let n_steps = config.n_steps;
    let dt = config.dt();
    let sqrt_dt = dt.sqrt();
    let grid: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();

    let width = n_steps + 1;
    let mut values = vec![0.0f64; config.n_paths * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(path, row)| {
            let mut noise = PathNoise::new(config.seed, path as u64);
            let mut x = x0;
            row[0] = x0;
            for k in 0..n_steps {
                let db = sqrt_dt * noise.standard_normal(k as u64);
                x = config.scheme.step(params, x, dt, db);
                row[k + 1] = x;
            }
        });

    Ok(PathEnsemble {
        start: x0,
        grid,
        values,
        n_paths: config.n_paths,
        increments_id: config.seed,
    })
}

/// Terminal states only, without storing intermediate grid values.
pub fn terminal_values(params: &ModelParams, x0: f64, config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if !(x0 >= 0.0) {
        return Err(Error::NegativeInput {
            name: "x0",
            value: x0,
        });
    }
    let n_steps = config.n_steps;
    let dt = config.dt();
    let sqrt_dt = dt.sqrt();
    Ok((0..config.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut noise = PathNoise::new(config.seed, path as u64);
            let mut x = x0;
            for k in 0..n_steps {
                let db = sqrt_dt * noise.standard_normal(k as u64);
                x = config.scheme.step(params, x, dt, db);
            }
            x
        })
        .collect())
}

/// Monte Carlo estimate of the semigroup `P_T f(x) = E f(X_T^x)`.
pub fn estimate_semigroup<F>(
    params: &ModelParams,
    f: F,
    x0: f64,
    config: &SimConfig,
) -> Result<MCEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let terminals = terminal_values(params, x0, config)?;
    let samples: Vec<f64> = terminals.par_iter().map(|&x| f(x)).collect();
    Ok(MCEstimate::from_samples(&samples))
}

/// Mean time the discretized paths spend at or below `eps`, counting left
/// grid endpoints: `dt * #{k < n_steps : X_k <= eps}`. An upper proxy for
/// the occupation time of the boundary point 0.
pub fn occupation_time_below(ensemble: &PathEnsemble, eps: f64) -> MCEstimate {
    let dt = ensemble.grid[1] - ensemble.grid[0];
    let n_steps = ensemble.n_steps();
    let samples: Vec<f64> = (0..ensemble.n_paths)
        .map(|p| {
            let row = ensemble.path(p);
            dt * row[..n_steps].iter().filter(|&&x| x <= eps).count() as f64
        })
        .collect();
    MCEstimate::from_samples(&samples)
}
