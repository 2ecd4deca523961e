//! Jump rates and the discretized fiber generators `M_{p,a}` on the momentum grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dispersion_eval_complex, ModelConfig, MomentumGrid};
use crate::quadrature::{sphere_area, SphereRule};
use crate::reservoir::{BathProfile, CorrelationFunction};

/// One ordered level transition `from → to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpChannel {
    pub from: usize,
    pub to: usize,
    /// `2π ψ̂(e - e') |⟨e',We⟩|²`, a rate density per unit sphere measure.
    pub amplitude: f64,
    /// Momentum transfer `|e - e'|`.
    pub radius: f64,
}

/// Golden-rule jump rates together with the sphere quadrature that spreads
/// each jump over the momentum shell.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRateTable {
    pub dim: usize,
    pub beta: f64,
    pub levels: Vec<f64>,
    pub channels: Vec<JumpChannel>,
    pub sphere: SphereRule,
}

impl JumpRateTable {
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// Total rate of a channel, `amplitude · |S^{d-1}|`.
    pub fn channel_rate(&self, ch: &JumpChannel) -> f64 {
        ch.amplitude * self.sphere_area()
    }

    pub fn channel(&self, from: usize, to: usize) -> Option<&JumpChannel> {
        self.channels.iter().find(|c| c.from == from && c.to == to)
    }

    pub fn channels_from(&self, from: usize) -> impl Iterator<Item = &JumpChannel> {
        self.channels.iter().filter(move |c| c.from == from)
    }

    /// Escape rates without the positivity check.
    pub fn escape_rates_unchecked(&self) -> Vec<f64> {
        let mut j = vec![0.0; self.levels.len()];
        for ch in &self.channels {
            j[ch.from] += self.channel_rate(ch);
        }
        j
    }
}

pub fn build_rate_table(cfg: &ModelConfig) -> Result<JumpRateTable> {
    let profile = cfg.bath_profile()?;
    build_rate_table_with(cfg, &profile)
}

pub fn build_rate_table_with(cfg: &ModelConfig, profile: &BathProfile) -> Result<JumpRateTable> {
    let spin = &cfg.spin;
    let n = spin.n_levels();
    if spin.couplings.len() != n || spin.couplings.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: spin.couplings.len(),
        });
    }
    let mut channels = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from == to {
                continue;
            }
            let a = spin.levels[from] - spin.levels[to];
            let amplitude = 2.0 * PI * profile.psi_hat(a) * spin.coupling_sq(to, from);
            if amplitude > 0.0 {
                channels.push(JumpChannel {
                    from,
                    to,
                    amplitude,
                    radius: a.abs(),
                });
            }
        }
    }
    Ok(JumpRateTable {
        dim: cfg.dim,
        beta: cfg.beta,
        levels: spin.levels.clone(),
        channels,
        sphere: SphereRule::new(cfg.dim, cfg.grid.sphere_nodes),
    })
}

/// `j(e) = Σ_{e'} 2π ψ̂(e-e') |S^{d-1}| |⟨e',We⟩|²`; fails if any level cannot escape.
pub fn escape_rates(table: &JumpRateTable) -> Result<Vec<f64>> {
    let j = table.escape_rates_unchecked();
    match j.iter().position(|&v| v <= 0.0) {
        Some(level) => Err(Error::ZeroEscapeRate { level }),
        None => Ok(j),
    }
}

/// Translation-invariant deposit of the momentum shell of radius `ρ` onto the
/// grid: `offset ↦ weight`, with weights summing to `|S^{d-1}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellKernel {
    pub radius: f64,
    /// Flat grid offsets (as multi-indices mod N) and their weights.
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl ShellKernel {
    /// Deposits `ρ s_m` for every sphere node by periodic multilinear interpolation.
    pub fn new(grid: &MomentumGrid, sphere: &SphereRule, radius: f64) -> Self {
        let h = grid.spacing();
        let n = grid.n as i64;
        let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (s, &w) in sphere.nodes.iter().zip(&sphere.weights) {
            let mut base = Vec::with_capacity(grid.dim);
            let mut frac = Vec::with_capacity(grid.dim);
            for &c in s {
                let u = radius * c / h;
                let f = u.floor();
                base.push(f as i64);
                frac.push(u - f);
            }
            for corner in 0..(1usize << grid.dim) {
                let mut idx = Vec::with_capacity(grid.dim);
                let mut wt = w;
                for ax in 0..grid.dim {
                    let up = (corner >> ax) & 1 == 1;
                    wt *= if up { frac[ax] } else { 1.0 - frac[ax] };
                    idx.push((base[ax] + up as i64).rem_euclid(n) as usize);
                }
                if wt != 0.0 {
                    *acc.entry(idx).or_insert(0.0) += wt;
                }
            }
        }
        let total: f64 = acc.values().sum();
        let scale = sphere.total_weight() / total;
        Self {
            radius,
            entries: acc.into_iter().map(|(k, v)| (k, v * scale)).collect(),
        }
    }

    /// `Σ_δ c(δ) e^{i x·k_δ}` for a lattice vector `x`.
    pub fn lattice_fourier(&self, grid: &MomentumGrid, x: &[f64]) -> Complex64 {
        let h = grid.spacing();
        self.entries
            .iter()
            .map(|(off, w)| {
                let phase: f64 = off.iter().zip(x).map(|(&j, &xi)| xi * h * j as f64).sum();
                Complex64::from_polar(*w, phase)
            })
            .sum()
    }
}

/// Which block of the fiber generator to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sector {
    /// `a = 0`: populations, on grid × levels.
    Populations,
    /// Coherence `|e⟩⟨e'|` with Bohr frequency `a = e - e' ≠ 0`, on the grid.
    Coherence { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiberBlock {
    Populations(DMatrix<Complex64>),
    /// The coherence blocks are diagonal in `k`.
    Coherence {
        from: usize,
        to: usize,
        a: f64,
        diagonal: DVector<Complex64>,
    },
}

/// Assembled population generator at `p = 0` and everything needed to form
/// other fibers.
///
/// State index is `e * N^d + k`; matrices act on densities, so columns of
/// `m00` sum to zero.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: ModelConfig,
    pub grid: MomentumGrid,
    pub table: JumpRateTable,
    pub escape: Vec<f64>,
    pub m00: DMatrix<f64>,
    /// Kernel per channel, aligned with `table.channels`.
    pub kernels: Vec<ShellKernel>,
}

impl Generator {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let table = build_rate_table(cfg)?;
        let escape = escape_rates(&table)?;
        Ok(Self::from_table(cfg, table, escape))
    }

    /// Builds the generator even when some escape rates vanish.
    pub fn new_unchecked(cfg: &ModelConfig) -> Result<Self> {
        let table = build_rate_table(cfg)?;
        let escape = table.escape_rates_unchecked();
        Ok(Self::from_table(cfg, table, escape))
    }

    fn from_table(cfg: &ModelConfig, table: JumpRateTable, escape: Vec<f64>) -> Self {
        let grid = cfg.momentum_grid();
        let nk = grid.len();
        let nl = table.levels.len();
        let dim = nk * nl;

        // Emission kernels are built once per radius; absorption uses the transpose.
        let mut kernels: Vec<ShellKernel> = Vec::with_capacity(table.channels.len());
        for ch in &table.channels {
            let emission = table.levels[ch.from] > table.levels[ch.to];
            let partner = table
                .channels
                .iter()
                .position(|c| c.from == ch.to && c.to == ch.from)
                .filter(|&i| i < kernels.len());
            let kernel = match partner {
                Some(i) => transpose_kernel(&grid, &kernels[i]),
                None if emission => ShellKernel::new(&grid, &table.sphere, ch.radius),
                None => {
                    // Build the emission kernel and transpose it, so that the
                    // pair is transpose-related whichever order it is met in.
                    transpose_kernel(&grid, &ShellKernel::new(&grid, &table.sphere, ch.radius))
                }
            };
            kernels.push(kernel);
        }

        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for (ch, kernel) in table.channels.iter().zip(&kernels) {
            for src in 0..nk {
                let km = grid.multi_index(src);
                let col = ch.from * nk + src;
                for (off, w) in &kernel.entries {
                    let tgt: Vec<usize> = km
                        .iter()
                        .zip(off)
                        .map(|(&a, &b)| (a + b) % grid.n)
                        .collect();
                    let row = ch.to * nk + grid.flat_index(&tgt);
                    m[(row, col)] += ch.amplitude * w;
                }
            }
        }
        for (e, &j) in escape.iter().enumerate() {
            for k in 0..nk {
                let i = e * nk + k;
                m[(i, i)] -= j;
            }
        }
        Self {
            cfg: cfg.clone(),
            grid,
            table,
            escape,
            m00: m,
            kernels,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.table.levels.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n_levels() * self.grid.len()
    }

    pub fn level_of(&self, idx: usize) -> usize {
        idx / self.grid.len()
    }

    /// `-i(ε(k+p/2) - ε(k-p/2))` for each grid momentum.
    pub fn kinetic(&self, p: &[Complex64]) -> Vec<Complex64> {
        let spec = &self.cfg.dispersion;
        (0..self.grid.len())
            .map(|i| {
                let k = self.grid.point(i);
                let plus: Vec<Complex64> =
                    k.iter().zip(p).map(|(&ki, &pi)| ki + pi * 0.5).collect();
                let minus: Vec<Complex64> =
                    k.iter().zip(p).map(|(&ki, &pi)| ki - pi * 0.5).collect();
                let de =
                    dispersion_eval_complex(spec, &plus) - dispersion_eval_complex(spec, &minus);
                Complex64::new(0.0, -1.0) * de
            })
            .collect()
    }

    /// Population block `M_{p,0} = G + L + K_p`.
    pub fn fiber(&self, p: &[Complex64]) -> DMatrix<Complex64> {
        let kin = self.kinetic(p);
        let nk = self.grid.len();
        let mut m = self.m00.map(|v| Complex64::new(v, 0.0));
        for i in 0..self.state_dim() {
            m[(i, i)] += kin[i % nk];
        }
        m
    }

    pub fn fiber_real_p(&self, p: &[f64]) -> DMatrix<Complex64> {
        let pc: Vec<Complex64> = p.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fiber(&pc)
    }

    /// Diagonal of the coherence block `|e⟩⟨e'|`:
    /// `-i(Υ_a + ε(k+p/2) - ε(k-p/2)) - (j(e)+j(e'))/2`.
    pub fn coherence_diagonal(
        &self,
        p: &[Complex64],
        from: usize,
        to: usize,
        upsilon: f64,
    ) -> DVector<Complex64> {
        let damp = -0.5 * (self.escape[from] + self.escape[to]);
        let kin = self.kinetic(p);
        DVector::from_iterator(
            kin.len(),
            kin.into_iter().map(|z| z + Complex64::new(damp, -upsilon)),
        )
    }

    /// `e^{βe/2}` per state index, the symmetrizing similarity.
    pub fn symmetrizer(&self) -> Vec<f64> {
        let nk = self.grid.len();
        (0..self.state_dim())
            .map(|i| (0.5 * self.cfg.beta * self.table.levels[i / nk]).exp())
            .collect()
    }

    /// Gibbs in the level, uniform in `k`, normalized to total mass one.
    pub fn gibbs(&self) -> DVector<f64> {
        let nk = self.grid.len();
        let e0 = self.table.levels[0];
        let w: Vec<f64> = self
            .table
            .levels
            .iter()
            .map(|e| (-self.cfg.beta * (e - e0)).exp())
            .collect();
        let z: f64 = w.iter().sum::<f64>() * nk as f64;
        DVector::from_iterator(
            self.state_dim(),
            (0..self.state_dim()).map(|i| w[i / nk] / z),
        )
    }

    /// Real `M̂_{0,0} = S M_{0,0} S^{-1}`, symmetric by detailed balance.
    pub fn symmetrized_m00(&self) -> DMatrix<f64> {
        let s = self.symmetrizer();
        DMatrix::from_fn(self.state_dim(), self.state_dim(), |i, j| {
            self.m00[(i, j)] * s[i] / s[j]
        })
    }

    /// Outgoing gain rate of every state, from column sums of the jump part.
    pub fn kernel_outflow(&self) -> Vec<f64> {
        let n = self.state_dim();
        (0..n)
            .into_par_iter()
            .map(|c| {
                (0..n)
                    .filter(|&r| r != c)
                    .map(|r| self.m00[(r, c)])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Rate of the jump `(k, e) → (k', e')`.
    pub fn rate(&self, k: usize, e: usize, kp: usize, ep: usize) -> f64 {
        let nk = self.grid.len();
        if e == ep {
            return 0.0;
        }
        self.m00[(ep * nk + kp, e * nk + k)]
    }

    /// Relabeling `k ↦ -k` as an index permutation.
    pub fn inversion_permutation(&self) -> Vec<usize> {
        let nk = self.grid.len();
        (0..self.state_dim())
            .map(|i| (i / nk) * nk + self.grid.inverse_index(i % nk))
            .collect()
    }
}

fn transpose_kernel(grid: &MomentumGrid, k: &ShellKernel) -> ShellKernel {
    let mut entries: Vec<(Vec<usize>, f64)> = k
        .entries
        .iter()
        .map(|(off, w)| (off.iter().map(|&j| (grid.n - j) % grid.n).collect(), *w))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    ShellKernel {
        radius: k.radius,
        entries,
    }
}

/// Assembles one block of the fiber generator at (possibly complex) `p`.
pub fn assemble_fiber(
    gen: &Generator,
    p: &[Complex64],
    sector: Sector,
    upsilon: f64,
) -> Result<FiberBlock> {
    if p.len() != gen.grid.dim {
        return Err(Error::DimensionMismatch {
            expected: gen.grid.dim,
            got: p.len(),
        });
    }
    match sector {
        Sector::Populations => Ok(FiberBlock::Populations(gen.fiber(p))),
        Sector::Coherence { from, to } => {
            let n = gen.n_levels();
            if from >= n || to >= n || from == to {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: from.max(to),
                });
            }
            let a = gen.table.levels[from] - gen.table.levels[to];
            Ok(FiberBlock::Coherence {
                from,
                to,
                a,
                diagonal: gen.coherence_diagonal(p, from, to, upsilon),
            })
        }
    }
}

/// `Â = S A S^{-1}` with `S = e^{βY/2}` acting on the level index.
pub fn symmetrize(block: &DMatrix<Complex64>, gen: &Generator) -> DMatrix<Complex64> {
    let s = gen.symmetrizer();
    DMatrix::from_fn(block.nrows(), block.ncols(), |i, j| {
        block[(i, j)] * (s[i] / s[j])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCrossCheck {
    pub a: f64,
    pub x: Vec<f64>,
    /// `∫dt e^{-iat} ψ(x,t)` by time quadrature.
    pub position: Complex64,
    /// `2π ψ̂(a) Σ_δ c(δ) e^{i x·k_δ}` from the assembled shell kernel.
    pub lattice: Complex64,
    /// `2π ψ̂(a) ∫ ds e^{i a s·x}`.
    pub closed: f64,
    /// Errors relative to `2π ψ̂(a) |S^{d-1}|`.
    pub rel_error_lattice: f64,
    pub rel_error_closed: f64,
}

/// Compares the time-domain gain coefficient with the Fourier transform of
/// the assembled grid kernel of radius `|a|`.
pub fn gain_kernel_crosscheck(
    cfg: &ModelConfig,
    corr: &CorrelationFunction,
    samples: &[(f64, Vec<f64>)],
) -> Result<Vec<GainCrossCheck>> {
    let grid = cfg.momentum_grid();
    let sphere = SphereRule::new(cfg.dim, cfg.grid.sphere_nodes);
    samples
        .iter()
        .map(|(a, x)| {
            if x.iter().any(|v| v.fract() != 0.0) {
                return Err(Error::Precondition(format!(
                    "lattice sites need integer coordinates, got {x:?}"
                )));
            }
            let position = corr.gain_coefficient_position(*a, x)?;
            let kernel = ShellKernel::new(&grid, &sphere, a.abs());
            let lattice = kernel.lattice_fourier(&grid, x) * (2.0 * PI * corr.profile.psi_hat(*a));
            let closed = corr.profile.gain_coefficient_closed(*a, x);
            // Normalized by the coefficient at x = 0, its maximum over x, so that
            // points near a zero of the oscillating transform stay well conditioned.
            let scale = 2.0 * PI * corr.profile.psi_hat(*a) * sphere.total_weight();
            Ok(GainCrossCheck {
                a: *a,
                x: x.clone(),
                position,
                lattice,
                closed,
                rel_error_lattice: (lattice - position).norm() / scale,
                rel_error_closed: (Complex64::new(closed, 0.0) - position).norm() / scale,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BathKind, BathSpec, DispersionSpec, GridSpec, SpinSystem};

    pub(crate) fn reference(n: usize) -> ModelConfig {
        ModelConfig {
            dim: 1,
            dispersion: DispersionSpec::nearest_neighbor(),
            spin: SpinSystem {
                levels: vec![0.0, 1.0],
                couplings: vec![
                    vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
                    vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                ],
            },
            beta: 1.0,
            bath: BathSpec::gaussian(2.0),
            grid: GridSpec {
                points_per_axis: n,
                sphere_nodes: 16,
            },
            rng_seed: 7,
        }
    }

    fn three_level_2d() -> ModelConfig {
        let c = |x: f64| Complex64::new(x, 0.0);
        ModelConfig {
            dim: 2,
            dispersion: DispersionSpec::nearest_neighbor(),
            spin: SpinSystem {
                levels: vec![0.0, 0.7, 1.9],
                couplings: vec![
                    vec![c(0.0), c(0.5), Complex64::new(0.1, 0.2)],
                    vec![c(0.5), c(0.1), c(0.4)],
                    vec![Complex64::new(0.1, -0.2), c(0.4), c(0.0)],
                ],
            },
            beta: 0.8,
            bath: BathSpec::gaussian(2.0),
            grid: GridSpec {
                points_per_axis: 8,
                sphere_nodes: 12,
            },
            rng_seed: 1,
        }
    }

    #[test]
    fn d1_sphere_is_two_points() {
        let t = build_rate_table(&reference(16)).unwrap();
        assert_eq!(t.sphere.nodes, vec![vec![1.0], vec![-1.0]]);
        assert_eq!(t.sphere.weights, vec![1.0, 1.0]);
        assert_eq!(t.channels.len(), 2);
        let down = t.channel(1, 0).unwrap();
        let up = t.channel(0, 1).unwrap();
        assert_eq!(down.radius, 1.0);
        assert!((up.amplitude / down.amplitude - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn escape_rates_with_unit_form_factor() {
        let mut cfg = reference(16);
        cfg.bath = BathSpec {
            kind: BathKind::Tabulated,
            cutoff: 1.0,
            table: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]],
        };
        let j = escape_rates(&build_rate_table(&cfg).unwrap()).unwrap();
        assert!((j[1] - 4.0 * PI).abs() < 1e-13);
        assert!((j[0] - 4.0 * PI * (-1.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn zero_coupling_has_no_channels_and_fails() {
        let mut cfg = reference(16);
        cfg.spin.couplings = vec![vec![Complex64::new(0.0, 0.0); 2]; 2];
        let t = build_rate_table(&cfg).unwrap();
        assert!(t.channels.is_empty());
        assert!(matches!(
            escape_rates(&t),
            Err(Error::ZeroEscapeRate { .. })
        ));
    }

    #[test]
    fn conservation_and_gibbs_kernel() {
        for cfg in [reference(32), three_level_2d()] {
            let g = Generator::new(&cfg).unwrap();
            let n = g.state_dim();
            for c in 0..n {
                let s: f64 = g.m00.column(c).iter().sum();
                assert!(s.abs() < 1e-12, "column {c} sums to {s}");
            }
            let r = &g.m00 * g.gibbs();
            assert!(r.amax() < 1e-10 * g.gibbs().amax());
        }
    }

    #[test]
    fn discretized_outflow_matches_escape_rates() {
        let g = Generator::new(&three_level_2d()).unwrap();
        for (i, v) in g.kernel_outflow().iter().enumerate() {
            let j = g.escape[g.level_of(i)];
            assert!((v - j).abs() < 1e-12 * j.max(1.0), "state {i}: {v} vs {j}");
        }
    }

    #[test]
    fn detailed_balance_entrywise_and_positivity() {
        let g = Generator::new(&three_level_2d()).unwrap();
        let nk = g.grid.len();
        let lv = &g.table.levels;
        for e in 0..3 {
            for ep in 0..3 {
                if e == ep {
                    continue;
                }
                for k in 0..nk {
                    for kp in 0..nk {
                        let fwd = g.rate(k, e, kp, ep);
                        let back = g.rate(kp, ep, k, e);
                        assert!(fwd >= 0.0);
                        let want = (g.cfg.beta * (lv[e] - lv[ep])).exp() * back;
                        assert!((fwd - want).abs() <= 1e-12 * fwd.max(want).max(1e-300));
                    }
                }
            }
        }
        for i in 0..g.state_dim() {
            for j in 0..g.state_dim() {
                if i != j {
                    assert!(g.m00[(i, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn coherence_block_real_part() {
        let g = Generator::new(&reference(16)).unwrap();
        let p = [Complex64::new(0.0, 0.0)];
        match assemble_fiber(&g, &p, Sector::Coherence { from: 1, to: 0 }, 0.3).unwrap() {
            FiberBlock::Coherence { a, diagonal, .. } => {
                assert_eq!(a, 1.0);
                let want = -0.5 * (g.escape[0] + g.escape[1]);
                for z in diagonal.iter() {
                    assert_eq!(z.re, want);
                    assert!((z.im + 0.3).abs() < 1e-15);
                }
            }
            _ => panic!("wrong sector"),
        }
    }

    #[test]
    fn symmetrized_block_is_symmetric_and_isospectral() {
        let g = Generator::new(&reference(16)).unwrap();
        let a = g.fiber_real_p(&[0.0]);
        let s = symmetrize(&a, &g);
        let asym = (&s - s.transpose()).camax();
        assert!(asym <= 1e-10, "asymmetry {asym}");
        let mut ev_a: Vec<f64> = a
            .map(|z| z.re)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .collect();
        let mut ev_s: Vec<f64> = s
            .map(|z| z.re)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect();
        ev_a.sort_by(|x, y| x.total_cmp(y));
        ev_s.sort_by(|x, y| x.total_cmp(y));
        for (x, y) in ev_a.iter().zip(&ev_s) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn single_level_symmetrizer_is_identity() {
        let mut cfg = reference(8);
        cfg.spin = SpinSystem {
            levels: vec![0.3],
            couplings: vec![vec![Complex64::new(1.0, 0.0)]],
        };
        let g = Generator::new_unchecked(&cfg).unwrap();
        let a = g.fiber_real_p(&[0.4]);
        assert_eq!(symmetrize(&a, &g), a);
    }

    #[test]
    fn inversion_maps_p_to_minus_p() {
        let g = Generator::new(&three_level_2d()).unwrap();
        let p = [Complex64::new(0.3, 0.05), Complex64::new(-0.2, 0.0)];
        let mp: Vec<Complex64> = p.iter().map(|z| -z).collect();
        let a = g.fiber(&p);
        let b = g.fiber(&mp);
        let perm = g.inversion_permutation();
        let n = g.state_dim();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                dev = dev.max((a[(perm[i], perm[j])] - b[(i, j)]).norm());
            }
        }
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn wrapped_radius_is_conserving() {
        let mut cfg = reference(16);
        cfg.spin.levels = vec![0.0, 4.5];
        cfg.beta = 0.3;
        let g = Generator::new(&cfg).unwrap();
        for c in 0..g.state_dim() {
            assert!(g.m00.column(c).iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
