//! Kinetic Monte Carlo of the jump process behind the population generator.
//!
//! Between jumps the particle flies freely with velocity `∇ε(k)`; a jump out
//! of level `e` happens at rate `j(e)`, picks the target level with
//! probability proportional to the channel rate and kicks the momentum by
//! `|e - e'|` in a uniformly random direction.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{build_rate_table, JumpRateTable};
use crate::model::{wrap_angle, DispersionSpec, ModelConfig};
use crate::stats::{chi_square_test, mean, pairwise_sum, total_variation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub e: usize,
    pub t: f64,
}

#[derive(Debug, Clone)]
struct Outgoing {
    to: usize,
    cumulative: f64,
    radius: f64,
}

/// Immutable jump-process data shared by all trajectories.
#[derive(Debug, Clone)]
pub struct KmcEngine {
    pub dim: usize,
    pub dispersion: DispersionSpec,
    pub escape: Vec<f64>,
    pub gibbs: Vec<f64>,
    outgoing: Vec<Vec<Outgoing>>,
    harmonics: Vec<Vec<f64>>,
}

impl KmcEngine {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let table = build_rate_table(cfg)?;
        Ok(Self::from_table(cfg, &table))
    }

    /// Levels with zero escape rate are allowed and move ballistically forever.
    pub fn from_table(cfg: &ModelConfig, table: &JumpRateTable) -> Self {
        let n = table.levels.len();
        let escape = table.escape_rates_unchecked();
        let mut outgoing = vec![Vec::new(); n];
        for (e, out) in outgoing.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ch in table.channels_from(e) {
                acc += table.channel_rate(ch) / escape[e];
                out.push(Outgoing {
                    to: ch.to,
                    cumulative: acc,
                    radius: ch.radius,
                });
            }
            if let Some(last) = out.last_mut() {
                last.cumulative = 1.0;
            }
        }
        let e0 = table.levels[0];
        let w: Vec<f64> = table
            .levels
            .iter()
            .map(|e| (-cfg.beta * (e - e0)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        Self {
            dim: cfg.dim,
            dispersion: cfg.dispersion.clone(),
            escape,
            gibbs: w.into_iter().map(|v| v / z).collect(),
            outgoing,
            harmonics: cfg.dispersion.harmonics(cfg.dim),
        }
    }

    /// `x = 0`, `k` uniform on the torus, level drawn from the Gibbs weights.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleState {
        let k = (0..self.dim).map(|_| rng.gen_range(-PI..PI)).collect();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut e = self.gibbs.len() - 1;
        for (i, g) in self.gibbs.iter().enumerate() {
            acc += g;
            if u < acc {
                e = i;
                break;
            }
        }
        ParticleState {
            x: vec![0.0; self.dim],
            k,
            e,
            t: 0.0,
        }
    }

    fn random_direction<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.dim {
            1 => out[0] = if rng.gen::<bool>() { 1.0 } else { -1.0 },
            2 => {
                let th = rng.gen_range(0.0..2.0 * PI);
                out[0] = th.cos();
                out[1] = th.sin();
            }
            _ => loop {
                let mut norm = 0.0;
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    norm += *v * *v;
                }
                if norm > 1e-300 {
                    let s = norm.sqrt();
                    out.iter_mut().for_each(|v| *v /= s);
                    break;
                }
            },
        }
    }

    fn jump<R: Rng + ?Sized>(&self, state: &mut ParticleState, rng: &mut R, dir: &mut [f64]) {
        let out = &self.outgoing[state.e];
        let ch = if out.len() == 1 {
            &out[0]
        } else {
            let u: f64 = rng.gen();
            out.iter()
                .find(|o| u < o.cumulative)
                .unwrap_or(out.last().unwrap())
        };
        self.random_direction(rng, dir);
        for (k, s) in state.k.iter_mut().zip(dir.iter()) {
            *k = wrap_angle(*k + ch.radius * s);
        }
        state.e = ch.to;
    }

    /// One Gillespie step: free flight for an `Exp(j(e))` time, then a jump.
    /// Returns the waiting time, or `None` for a level that never jumps.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ParticleState, rng: &mut R) -> Option<f64> {
        let j = self.escape[state.e];
        if j <= 0.0 {
            return None;
        }
        let w: f64 = rng.sample::<f64, _>(Exp1) / j;
        let mut v = vec![0.0; self.dim];
        self.velocity(&state.k, &mut v);
        for (x, vi) in state.x.iter_mut().zip(&v) {
            *x += vi * w;
        }
        state.t += w;
        let mut dir = vec![0.0; self.dim];
        self.jump(state, rng, &mut dir);
        Some(w)
    }

    /// Runs until `t_end`, ending with a partial free flight. Returns the number of jumps.
    pub fn advance_to<R: Rng + ?Sized>(
        &self,
        state: &mut ParticleState,
        t_end: f64,
        rng: &mut R,
    ) -> u64 {
        let mut jumps = 0;
        let mut v = vec![0.0; self.dim];
        let mut dir = vec![0.0; self.dim];
        loop {
            let j = self.escape[state.e];
            self.velocity(&state.k, &mut v);
            let w = if j > 0.0 {
                rng.sample::<f64, _>(Exp1) / j
            } else {
                f64::INFINITY
            };
            if state.t + w >= t_end {
                let dt = t_end - state.t;
                for (x, vi) in state.x.iter_mut().zip(&v) {
                    *x += vi * dt;
                }
                state.t = t_end;
                return jumps;
            }
            for (x, vi) in state.x.iter_mut().zip(&v) {
                *x += vi * w;
            }
            state.t += w;
            self.jump(state, rng, &mut dir);
            jumps += 1;
        }
    }

    /// `∇ε(k)` without allocation.
    fn velocity(&self, k: &[f64], out: &mut [f64]) {
        for ((o, &ki), cs) in out.iter_mut().zip(k).zip(&self.harmonics) {
            *o = cs
                .iter()
                .enumerate()
                .map(|(n, c)| {
                    let m = (n + 1) as f64;
                    c * m * (m * ki).sin()
                })
                .sum();
        }
    }

    /// States right after each jump of one trajectory, starting with the initial state.
    pub fn trajectory(
        &self,
        seed: u64,
        index: u64,
        t_final: f64,
        max_events: usize,
    ) -> Vec<ParticleState> {
        let mut rng = trajectory_rng(seed, index);
        let mut s = self.initial_state(&mut rng);
        let mut out = vec![s.clone()];
        while out.len() < max_events {
            let mut probe = s.clone();
            let before = rng.clone();
            match self.step(&mut probe, &mut rng) {
                Some(_) if probe.t <= t_final => {
                    s = probe;
                    out.push(s.clone());
                }
                _ => {
                    rng = before;
                    self.advance_to(&mut s, t_final, &mut rng);
                    out.push(s);
                    break;
                }
            }
        }
        out
    }
}

/// Independent stream per trajectory, so results do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_final: f64,
    /// Extra observation times before `t_final`; used for the stationary CGF slope.
    pub checkpoints: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    pub k_bins: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, t_final: f64, seed: u64) -> Self {
        Self {
            n_traj,
            t_final,
            checkpoints: Vec::new(),
            probes: Vec::new(),
            k_bins: 32,
            seed,
        }
    }

    fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .checkpoints
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < self.t_final)
            .collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        ts.push(self.t_final);
        ts
    }
}

#[derive(Debug, Clone)]
struct Record {
    x: Vec<Vec<f64>>,
    k: Vec<f64>,
    e: usize,
    jumps: u64,
}

/// Estimate of `f(p)` from `E[e^{-ip·x_t}]` at two times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgfEstimate {
    pub p: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    /// `(log m(t2) - log m(t1)) / (t2 - t1)` with `m(t) = E[e^{-ip·x_t}]`.
    pub value: Complex64,
    /// Delta-method standard error of `Re value`.
    pub se: f64,
    /// `m(t2)`.
    pub moment: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub t_final: f64,
    pub mean_x: Vec<f64>,
    pub mean_x_se: Vec<f64>,
    pub cov_x: Vec<Vec<f64>>,
    /// `cov_x / t_final`.
    pub diffusion: Vec<Vec<f64>>,
    pub diffusion_se: Vec<Vec<f64>>,
    pub level_hist: Vec<u64>,
    pub level_gibbs: Vec<f64>,
    pub chi_square: f64,
    pub chi_square_p: f64,
    /// Histogram of each momentum component over `k_bins` equal bins.
    pub k_hist: Vec<Vec<u64>>,
    pub k_total_variation: f64,
    pub cgf: Vec<CgfEstimate>,
    pub mean_jumps: f64,
    pub warnings: Vec<String>,
}

impl EnsembleStats {
    /// Largest `|mean_x_i| / se_i`.
    pub fn drift_z(&self) -> f64 {
        self.mean_x
            .iter()
            .zip(&self.mean_x_se)
            .map(|(m, s)| if *s > 0.0 { m.abs() / s } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

pub fn run_ensemble(engine: &KmcEngine, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    if cfg.n_traj < 2 {
        return Err(Error::Precondition(
            "at least two trajectories are needed".into(),
        ));
    }
    if !(cfg.t_final > 0.0) {
        return Err(Error::Precondition(format!(
            "t_final must be positive, got {}",
            cfg.t_final
        )));
    }
    if cfg.probes.iter().any(|p| p.len() != engine.dim) {
        return Err(Error::DimensionMismatch {
            expected: engine.dim,
            got: cfg.probes[0].len(),
        });
    }
    let times = cfg.times();
    let records: Vec<Record> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let mut s = engine.initial_state(&mut rng);
            let mut xs = Vec::with_capacity(times.len());
            let mut jumps = 0;
            for &t in &times {
                jumps += engine.advance_to(&mut s, t, &mut rng);
                xs.push(s.x.clone());
            }
            Record {
                x: xs,
                k: s.k,
                e: s.e,
                jumps,
            }
        })
        .collect();
    Ok(reduce(engine, cfg, &times, &records))
}

fn reduce(
    engine: &KmcEngine,
    cfg: &EnsembleConfig,
    times: &[f64],
    recs: &[Record],
) -> EnsembleStats {
    let d = engine.dim;
    let n = recs.len() as f64;
    let last = times.len() - 1;
    let comp = |i: usize| -> Vec<f64> { recs.iter().map(|r| r.x[last][i]).collect() };
    let cols: Vec<Vec<f64>> = (0..d).map(comp).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();

    let mut cov = vec![vec![0.0; d]; d];
    let mut cov_se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let prod: Vec<f64> = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .collect();
            let c = pairwise_sum(&prod) / (n - 1.0);
            let dev: Vec<f64> = prod.iter().map(|v| (v - c).powi(2)).collect();
            cov[i][j] = c;
            cov_se[i][j] = (pairwise_sum(&dev) / (n - 1.0) / n).sqrt();
        }
    }
    let mean_se: Vec<f64> = (0..d).map(|i| (cov[i][i] / n).sqrt()).collect();
    let t = cfg.t_final;
    let diffusion = cov
        .iter()
        .map(|r| r.iter().map(|v| v / t).collect())
        .collect();
    let diffusion_se = cov_se
        .iter()
        .map(|r| r.iter().map(|v| v / t).collect())
        .collect();

    let nl = engine.gibbs.len();
    let mut level_hist = vec![0u64; nl];
    for r in recs {
        level_hist[r.e] += 1;
    }
    let (chi_square, chi_square_p) = if nl > 1 {
        chi_square_test(&level_hist, &engine.gibbs)
    } else {
        (0.0, 1.0)
    };

    let bins = cfg.k_bins.max(1);
    let mut k_hist = vec![vec![0u64; bins]; d];
    for r in recs {
        for (ax, &k) in r.k.iter().enumerate() {
            let b = (((k + PI) / (2.0 * PI)) * bins as f64).floor() as usize;
            k_hist[ax][b.min(bins - 1)] += 1;
        }
    }
    let uniform = vec![1.0 / bins as f64; bins];
    let k_total_variation = k_hist
        .iter()
        .map(|h| total_variation(h, &uniform))
        .fold(0.0, f64::max);

    let mut cgf = Vec::new();
    for p in &cfg.probes {
        let phases: Vec<Vec<(f64, f64)>> = (0..times.len())
            .map(|ti| {
                recs.iter()
                    .map(|r| {
                        let ph: f64 = -p.iter().zip(&r.x[ti]).map(|(a, b)| a * b).sum::<f64>();
                        (ph.cos(), ph.sin())
                    })
                    .collect()
            })
            .collect();
        for ti in 0..times.len() {
            let t1 = if ti == 0 { 0.0 } else { times[ti - 1] };
            let t2 = times[ti];
            cgf.push(cgf_between(
                p,
                t1,
                t2,
                if ti == 0 { None } else { Some(&phases[ti - 1]) },
                &phases[ti],
            ));
        }
    }

    let mut warnings = Vec::new();
    let mean_jumps = pairwise_sum(&recs.iter().map(|r| r.jumps as f64).collect::<Vec<_>>()) / n;
    if engine.escape.iter().any(|&j| j <= 0.0) {
        warnings.push("some levels never jump; motion from them is ballistic".into());
    }

    EnsembleStats {
        n_traj: recs.len(),
        t_final: t,
        mean_x: means,
        mean_x_se: mean_se,
        cov_x: cov,
        diffusion,
        diffusion_se,
        level_hist,
        level_gibbs: engine.gibbs.clone(),
        chi_square,
        chi_square_p,
        k_hist,
        k_total_variation,
        cgf,
        mean_jumps,
        warnings,
    }
}

/// Slope of `log E[e^{-ip·x}]` between two observation times with a
/// delta-method error from the joint sample covariance.
fn cgf_between(
    p: &[f64],
    t1: f64,
    t2: f64,
    first: Option<&Vec<(f64, f64)>>,
    second: &[(f64, f64)],
) -> CgfEstimate {
    let n = second.len() as f64;
    let col = |v: &[(f64, f64)], re: bool| -> Vec<f64> {
        v.iter().map(|z| if re { z.0 } else { z.1 }).collect()
    };
    let mut vars: Vec<Vec<f64>> = Vec::new();
    if let Some(f) = first {
        vars.push(col(f, true));
        vars.push(col(f, false));
    }
    vars.push(col(second, true));
    vars.push(col(second, false));
    let means: Vec<f64> = vars.iter().map(|v| mean(v)).collect();
    let m2 = Complex64::new(means[means.len() - 2], means[means.len() - 1]);
    let m1 = if first.is_some() {
        Complex64::new(means[0], means[1])
    } else {
        Complex64::new(1.0, 0.0)
    };
    let dt = t2 - t1;
    let value = (m2.ln() - m1.ln()) / dt;
    let mut grad = Vec::new();
    if first.is_some() {
        let a = m1.norm_sqr();
        grad.push(-m1.re / a / dt);
        grad.push(-m1.im / a / dt);
    }
    let b = m2.norm_sqr();
    grad.push(m2.re / b / dt);
    grad.push(m2.im / b / dt);
    let mut var = 0.0;
    for i in 0..vars.len() {
        for j in 0..vars.len() {
            if grad[i] == 0.0 || grad[j] == 0.0 {
                continue;
            }
            let prod: Vec<f64> = vars[i]
                .iter()
                .zip(&vars[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .collect();
            var += grad[i] * grad[j] * pairwise_sum(&prod) / (n - 1.0);
        }
    }
    CgfEstimate {
        p: p.to_vec(),
        t1,
        t2,
        value,
        se: (var.max(0.0) / n).sqrt(),
        moment: m2,
    }
}

/// `(1/t) log E[e^{-ip·x_t}]` estimated in the stationary regime, as the
/// slope of the log-moment between `t_final/2` and `t_final`.
pub fn cgf_estimate(
    engine: &KmcEngine,
    p: &[f64],
    n_traj: usize,
    t_final: f64,
    seed: u64,
) -> Result<CgfEstimate> {
    let mut cfg = EnsembleConfig::new(n_traj, t_final, seed);
    cfg.checkpoints = vec![0.5 * t_final];
    cfg.probes = vec![p.to_vec()];
    cfg.k_bins = 1;
    let stats = run_ensemble(engine, &cfg)?;
    Ok(stats.cgf.last().cloned().expect("one probe was requested"))
}
