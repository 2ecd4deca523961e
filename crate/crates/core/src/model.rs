//! Physical model definition, standing assumptions and the momentum grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::BathProfile;

/// Full physical specification of a run, deserialized one-to-one from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub dispersion: DispersionSpec,
    pub spin: SpinSystem,
    pub beta: f64,
    pub bath: BathSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionKind {
    NearestNeighborLaplacian,
    CosineSeries,
}

/// Dispersion law `ε(k)`.
///
/// For [`DispersionKind::CosineSeries`] the coefficients are laid out axis by
/// axis: with `H = coefficients.len() / dim` harmonics per axis,
/// `ε(k) = Σ_i Σ_{n=1..H} c[i*H + n-1] (1 - cos(n k_i))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSpec {
    pub kind: DispersionKind,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl DispersionSpec {
    pub fn nearest_neighbor() -> Self {
        Self {
            kind: DispersionKind::NearestNeighborLaplacian,
            coefficients: Vec::new(),
        }
    }

    /// Per-axis harmonic amplitudes, `out[i][n-1]` multiplying `1 - cos(n k_i)`.
    pub(crate) fn harmonics(&self, dim: usize) -> Vec<Vec<f64>> {
        match self.kind {
            DispersionKind::NearestNeighborLaplacian => vec![vec![2.0]; dim],
            DispersionKind::CosineSeries => {
                if dim == 0 || self.coefficients.is_empty() {
                    return vec![Vec::new(); dim];
                }
                let h = self.coefficients.len() / dim;
                self.coefficients
                    .chunks(h.max(1))
                    .take(dim)
                    .map(|c| c.to_vec())
                    .collect()
            }
        }
    }

    fn check_shape(&self, dim: usize) -> std::result::Result<(), String> {
        if self.kind == DispersionKind::CosineSeries {
            if self.coefficients.is_empty() {
                return Err("cosine series needs at least one coefficient per axis".into());
            }
            if self.coefficients.len() % dim != 0 {
                return Err(format!(
                    "cosine series has {} coefficients, not a multiple of dim = {dim}",
                    self.coefficients.len()
                ));
            }
            if self.coefficients.iter().any(|c| !c.is_finite()) {
                return Err("cosine series coefficients must be finite".into());
            }
        }
        Ok(())
    }
}

/// Evaluates `ε(k)`; `k` has one component per axis.
pub fn dispersion_eval(spec: &DispersionSpec, k: &[f64]) -> f64 {
    let harm = spec.harmonics(k.len());
    k.iter()
        .zip(&harm)
        .map(|(&ki, cs)| {
            cs.iter()
                .enumerate()
                .map(|(n, c)| c * (1.0 - ((n + 1) as f64 * ki).cos()))
                .sum::<f64>()
        })
        .sum()
}

/// Exact gradient `∇ε(k)`.
pub fn dispersion_grad(spec: &DispersionSpec, k: &[f64]) -> Vec<f64> {
    let harm = spec.harmonics(k.len());
    k.iter()
        .zip(&harm)
        .map(|(&ki, cs)| {
            cs.iter()
                .enumerate()
                .map(|(n, c)| {
                    let m = (n + 1) as f64;
                    c * m * (m * ki).sin()
                })
                .sum()
        })
        .collect()
}

/// Analytic continuation of `ε` to complex momenta.
pub fn dispersion_eval_complex(spec: &DispersionSpec, k: &[Complex64]) -> Complex64 {
    let harm = spec.harmonics(k.len());
    k.iter()
        .zip(&harm)
        .map(|(&ki, cs)| {
            cs.iter()
                .enumerate()
                .map(|(n, c)| c * (1.0 - (ki * (n + 1) as f64).cos()))
                .sum::<Complex64>()
        })
        .sum()
}

/// `max_k |∂ε/∂k_i|` bound per axis, from the harmonic amplitudes.
pub fn dispersion_speed_bound(spec: &DispersionSpec, dim: usize) -> Vec<f64> {
    spec.harmonics(dim)
        .iter()
        .map(|cs| {
            cs.iter()
                .enumerate()
                .map(|(n, c)| c.abs() * (n + 1) as f64)
                .sum()
        })
        .collect()
}

/// Internal levels in the eigenbasis of `Y` and the coupling matrix `⟨e',We⟩`.
///
/// In JSON each coupling entry is either a real number or a `[re, im]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystem {
    pub levels: Vec<f64>,
    #[serde(with = "coupling_serde")]
    pub couplings: Vec<Vec<Complex64>>,
}

mod coupling_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Real(f64),
        Complex([f64; 2]),
    }

    pub fn serialize<S: Serializer>(m: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Entry>> = m
            .iter()
            .map(|row| {
                row.iter()
                    .map(|z| {
                        if z.im == 0.0 {
                            Entry::Real(z.re)
                        } else {
                            Entry::Complex([z.re, z.im])
                        }
                    })
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        let rows = Vec::<Vec<Entry>>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|e| match e {
                        Entry::Real(re) => Complex64::new(re, 0.0),
                        Entry::Complex([re, im]) => Complex64::new(re, im),
                    })
                    .collect()
            })
            .collect())
    }
}

impl SpinSystem {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// `|⟨e',We⟩|²`.
    pub fn coupling_sq(&self, to: usize, from: usize) -> f64 {
        self.couplings[to][from].norm_sqr()
    }

    /// Bohr frequencies `e - e'` over ordered pairs of distinct levels.
    pub fn bohr_frequencies(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_levels();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1));
        for e in 0..n {
            for ep in 0..n {
                if e != ep {
                    out.push((e, ep, self.levels[e] - self.levels[ep]));
                }
            }
        }
        out
    }

    fn coupling_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n_levels();
        DMatrix::from_fn(n, n, |i, j| self.couplings[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathKind {
    BuiltInGaussian,
    Tabulated,
}

/// Bath profile as given in the configuration.
///
/// `table` holds `[ω, ψ̂(ω)]` rows for `ω ≥ 0` and is only read for
/// [`BathKind::Tabulated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub kind: BathKind,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<[f64; 2]>,
}

fn default_cutoff() -> f64 {
    2.0
}

impl BathSpec {
    pub fn gaussian(cutoff: f64) -> Self {
        Self {
            kind: BathKind::BuiltInGaussian,
            cutoff,
            table: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points_per_axis: usize,
    #[serde(default = "default_sphere_nodes")]
    pub sphere_nodes: usize,
}

fn default_sphere_nodes() -> usize {
    16
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn bath_profile(&self) -> Result<BathProfile> {
        BathProfile::new(&self.bath, self.beta, self.dim)
    }

    pub fn momentum_grid(&self) -> MomentumGrid {
        MomentumGrid::new(self.dim, self.grid.points_per_axis)
    }

    /// Same model on a grid with a different number of points per axis.
    pub fn with_grid_points(&self, n: usize) -> Self {
        let mut c = self.clone();
        c.grid.points_per_axis = n;
        c
    }
}

/// Uniform grid `k_j = -π + 2πj/N` on each axis of the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    pub dim: usize,
    pub n: usize,
}

impl MomentumGrid {
    pub fn new(dim: usize, n: usize) -> Self {
        Self { dim, n }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// `-π + 2πj/N`, computed as `(j - N/2)·h` so that `k ↦ -k` is exact in floating point.
    pub fn coord(&self, j: usize) -> f64 {
        self.spacing() * (j as f64 - (self.n / 2) as f64)
    }

    /// Multi-index of a flat index; axis 0 varies fastest.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push(idx % self.n);
            idx /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &j| acc * self.n + j)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .into_iter()
            .map(|j| self.coord(j))
            .collect()
    }

    /// Index of `-k`: `j ↦ (N - j) mod N` on every axis.
    pub fn inverse_index(&self, idx: usize) -> usize {
        let m: Vec<usize> = self
            .multi_index(idx)
            .into_iter()
            .map(|j| (self.n - j) % self.n)
            .collect();
        self.flat_index(&m)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(k: f64) -> f64 {
    let w = (k + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, result: std::result::Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    /// Runs every check without failing; see [`validate_model`] for the strict form.
    pub fn build(cfg: &ModelConfig) -> Self {
        let mut r = ValidationReport {
            checks: Vec::new(),
            warnings: Vec::new(),
        };

        let structural = structural_check(cfg);
        let structural_ok = structural.is_ok();
        r.push("structure", structural);
        if !structural_ok {
            return r;
        }
        if cfg.dim < 4 {
            r.warnings.push(format!(
                "dim = {} < 4: the correlation decay laws are not guaranteed",
                cfg.dim
            ));
        }

        let grid = cfg.momentum_grid();
        r.push("inversion_symmetry", {
            let worst = (0..grid.len())
                .map(|i| {
                    let k = grid.point(i);
                    let mk = grid.point(grid.inverse_index(i));
                    (dispersion_eval(&cfg.dispersion, &k) - dispersion_eval(&cfg.dispersion, &mk))
                        .abs()
                })
                .fold(0.0, f64::max);
            if worst == 0.0 {
                Ok("ε(k) = ε(-k) on every grid point".into())
            } else {
                Err(format!("max |ε(k) - ε(-k)| = {worst:e}"))
            }
        });

        r.push("non_constant", {
            let bounds = dispersion_speed_bound(&cfg.dispersion, cfg.dim);
            // Sample the gradient on the grid rather than trusting the bound alone.
            let mut max_grad = vec![0.0f64; cfg.dim];
            for i in 0..grid.len() {
                let g = dispersion_grad(&cfg.dispersion, &grid.point(i));
                for (m, gi) in max_grad.iter_mut().zip(g) {
                    *m = m.max(gi.abs());
                }
            }
            match max_grad
                .iter()
                .position(|&m| m <= 1e-14 * (1.0 + bounds.iter().cloned().fold(0.0, f64::max)))
            {
                Some(axis) => Err(format!("ε is constant along axis {axis}")),
                None => Ok(format!("max |∂ε/∂k_i| = {max_grad:?}")),
            }
        });

        r.push("distinct_bohr_frequencies", {
            let mut freqs: Vec<f64> = cfg
                .spin
                .bohr_frequencies()
                .into_iter()
                .map(|(_, _, a)| a)
                .collect();
            freqs.sort_by(|a, b| a.total_cmp(b));
            let scale = freqs.iter().fold(1.0f64, |m, a| m.max(a.abs()));
            match freqs
                .windows(2)
                .find(|w| (w[1] - w[0]).abs() <= 1e-12 * scale)
            {
                Some(w) => Err(format!("Bohr frequency {} is degenerate", w[0])),
                None => Ok(format!("{} distinct nonzero Bohr frequencies", freqs.len())),
            }
        });

        let w = cfg.spin.coupling_matrix();
        r.push("hermitian_coupling", {
            let dev = (&w - w.adjoint())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if dev <= 1e-12 {
                Ok("W = W*".into())
            } else {
                Err(format!("max |W - W*| = {dev:e}"))
            }
        });

        r.push("coupling_norm", {
            let herm = (&w + w.adjoint()) * Complex64::new(0.5, 0.0);
            let norm = herm
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            if norm <= 1.0 + 1e-12 {
                Ok(format!("‖W‖ = {norm}"))
            } else {
                Err(format!("‖W‖ = {norm} exceeds 1"))
            }
        });

        match cfg.bath_profile() {
            Err(e) => r.push("bath_profile", Err(e.to_string())),
            Ok(profile) => {
                r.push("psi_hat_zero", {
                    let v = profile.psi_hat(0.0);
                    if v == 0.0 {
                        Ok("ψ̂(0) = 0".into())
                    } else {
                        Err(format!("ψ̂(0) = {v}"))
                    }
                });
                r.push("fgr_connected", fgr_connectivity(&cfg.spin, &profile));
            }
        }
        r
    }
}

fn structural_check(cfg: &ModelConfig) -> std::result::Result<String, String> {
    if cfg.dim == 0 {
        return Err("dim must be at least 1".into());
    }
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
        return Err(format!(
            "beta must be positive and finite, got {}",
            cfg.beta
        ));
    }
    let n = cfg.grid.points_per_axis;
    if n == 0 || n % 2 != 0 {
        return Err(format!(
            "points_per_axis must be even and positive, got {n}"
        ));
    }
    if cfg.grid.sphere_nodes == 0 || (cfg.dim == 2 && cfg.grid.sphere_nodes % 2 != 0) {
        return Err(format!(
            "sphere_nodes must be positive (and even in d = 2), got {}",
            cfg.grid.sphere_nodes
        ));
    }
    cfg.dispersion.check_shape(cfg.dim)?;
    let lv = &cfg.spin.levels;
    if lv.is_empty() {
        return Err("at least one level is required".into());
    }
    if lv.iter().any(|e| !e.is_finite()) || lv.windows(2).any(|w| w[1] <= w[0]) {
        return Err("levels must be finite and strictly increasing".into());
    }
    let m = lv.len();
    if cfg.spin.couplings.len() != m || cfg.spin.couplings.iter().any(|row| row.len() != m) {
        return Err(format!("couplings must be a {m}×{m} matrix"));
    }
    Ok(format!(
        "d = {}, {} levels, {}^{} grid",
        cfg.dim, m, n, cfg.dim
    ))
}

/// Graph on the levels with an edge `e ↔ e'` whenever the golden-rule rate is nonzero.
pub fn fgr_graph(spin: &SpinSystem, profile: &BathProfile) -> Vec<Vec<bool>> {
    let n = spin.n_levels();
    let mut adj = vec![vec![false; n]; n];
    for e in 0..n {
        for ep in 0..n {
            if e != ep {
                let w = profile.psi_hat(spin.levels[ep] - spin.levels[e]) * spin.coupling_sq(e, ep);
                if w > 0.0 {
                    adj[e][ep] = true;
                    adj[ep][e] = true;
                }
            }
        }
    }
    adj
}

fn fgr_connectivity(
    spin: &SpinSystem,
    profile: &BathProfile,
) -> std::result::Result<String, String> {
    let adj = fgr_graph(spin, profile);
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if adj[v][u] && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    let isolated: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    if isolated.is_empty() {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[i][j])
            .count();
        Ok(format!("connected with {edges} edge(s)"))
    } else {
        Err(format!(
            "levels {isolated:?} are not reachable from level 0"
        ))
    }
}

/// Checks the standing assumptions and rejects the model on any hard failure.
pub fn validate_model(cfg: &ModelConfig) -> Result<ValidationReport> {
    let report = ValidationReport::build(cfg);
    if report.passed() {
        Ok(report)
    } else {
        Err(Error::InvalidModel {
            failures: report.failures(),
        })
    }
}
