//! Bath correlations: the effective squared form factor `ψ̂(ω)`, the
//! space-time correlation function `ψ(x,t)`, its decay laws, the Lamb shift
//! and the position-space gain coefficient.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BathKind, BathSpec, SpinSystem};
use crate::quadrature::{
    composite_legendre, gauss_jacobi, ladder_order, sphere_area, sphere_transform, Rule,
};

/// Relative level below which `ψ̂` is treated as zero when truncating the frequency range.
const TRUNCATION: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `ω^m e^{-ω²/Λ²} / (1 - e^{-βω})` for `ω > 0`.
    Gaussian { cutoff: f64, power: i32 },
    /// Piecewise-linear `ψ̂` on `ω ≥ 0`, zero beyond the last node.
    Tabulated { omega: Vec<f64>, value: Vec<f64> },
}

/// Effective squared form factor, extended to `ω < 0` by the KMS relation
/// `ψ̂(-ω) = e^{-βω} ψ̂(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathProfile {
    pub kind: BathKind,
    pub beta: f64,
    pub dim: usize,
    shape: Shape,
    support: (f64, f64),
}

/// Power of `ω` in the built-in profile: the smallest odd power that keeps
/// `ψ̂` analytic through `ω = 0` and vanishing there, matching `|ω|^{d-2}`
/// whenever that is already odd.
pub fn gaussian_power(dim: usize) -> i32 {
    let d = dim as i32;
    if d < 4 {
        3
    } else if d % 2 == 1 {
        d - 2
    } else {
        d - 1
    }
}

impl BathProfile {
    pub fn new(spec: &BathSpec, beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let shape = match spec.kind {
            BathKind::BuiltInGaussian => {
                if !(spec.cutoff > 0.0 && spec.cutoff.is_finite()) {
                    return Err(Error::Config(format!(
                        "cutoff must be positive, got {}",
                        spec.cutoff
                    )));
                }
                Shape::Gaussian {
                    cutoff: spec.cutoff,
                    power: gaussian_power(dim),
                }
            }
            BathKind::Tabulated => {
                let mut rows = spec.table.clone();
                if rows.is_empty() {
                    return Err(Error::Config(
                        "tabulated bath needs at least one row".into(),
                    ));
                }
                rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
                if rows
                    .iter()
                    .any(|r| !(r[0] >= 0.0 && r[0].is_finite() && r[1] >= 0.0 && r[1].is_finite()))
                {
                    return Err(Error::Config(
                        "tabulated bath rows must be finite with ω ≥ 0 and ψ̂ ≥ 0".into(),
                    ));
                }
                if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Config(
                        "tabulated bath frequencies must be distinct".into(),
                    ));
                }
                if rows[0][0] > 0.0 {
                    rows.insert(0, [0.0, 0.0]);
                }
                Shape::Tabulated {
                    omega: rows.iter().map(|r| r[0]).collect(),
                    value: rows.iter().map(|r| r[1]).collect(),
                }
            }
        };
        let mut p = BathProfile {
            kind: spec.kind,
            beta,
            dim,
            shape,
            support: (0.0, 0.0),
        };
        p.support = p.find_support();
        Ok(p)
    }

    /// `ψ̂` on the positive half-line.
    fn positive(&self, w: f64) -> f64 {
        match &self.shape {
            Shape::Gaussian { cutoff, power } => {
                w.powi(*power) * (-(w / cutoff).powi(2)).exp() / -(-self.beta * w).exp_m1()
            }
            Shape::Tabulated { omega, value } => {
                let last = *omega.last().unwrap();
                if w > last {
                    return 0.0;
                }
                let i = omega.partition_point(|&o| o <= w).clamp(1, omega.len() - 1);
                let (x0, x1) = (omega[i - 1], omega[i]);
                let f = ((w - x0) / (x1 - x0)).clamp(0.0, 1.0);
                value[i - 1] * (1.0 - f) + value[i] * f
            }
        }
    }

    pub fn psi_hat(&self, omega: f64) -> f64 {
        if omega > 0.0 {
            self.positive(omega)
        } else if omega < 0.0 {
            (self.beta * omega).exp() * self.positive(-omega)
        } else {
            0.0
        }
    }

    /// Frequency interval outside which `ψ̂ < 1e-16·max ψ̂`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    fn find_support(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Gaussian { cutoff, .. } => {
                let step = cutoff / 200.0;
                let omegas: Vec<f64> = (1..=20_000).map(|i| step * i as f64).collect();
                let pos: Vec<f64> = omegas.iter().map(|&w| self.positive(w)).collect();
                let neg: Vec<f64> = omegas
                    .iter()
                    .zip(&pos)
                    .map(|(&w, v)| (-self.beta * w).exp() * v)
                    .collect();
                let max = pos.iter().cloned().fold(0.0, f64::max);
                let thr = TRUNCATION * max;
                let edge = |vals: &[f64]| -> f64 {
                    let peak = vals
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, &v)| if v > vals[b] { i } else { b });
                    let i = (peak..vals.len())
                        .find(|&i| vals[i] < thr)
                        .unwrap_or(vals.len() - 1);
                    omegas[i]
                };
                let hi = edge(&pos);
                (-edge(&neg).min(hi), hi)
            }
            Shape::Tabulated { omega, value } => {
                let hi = *omega.last().unwrap();
                let max = value.iter().cloned().fold(0.0, f64::max);
                let thr = TRUNCATION * max;
                let lo = omega
                    .iter()
                    .zip(value)
                    .filter(|(&w, &v)| (-self.beta * w).exp() * v >= thr || w == 0.0)
                    .map(|(&w, _)| w)
                    .fold(0.0, f64::max);
                // Include the next node so the last linear piece is not cut.
                let lo_idx = omega.iter().position(|&w| w == lo).unwrap();
                let lo = omega.get(lo_idx + 1).copied().unwrap_or(lo);
                (-lo, hi)
            }
        }
    }

    /// Kinks of `ψ̂` inside the support (table nodes), used as panel edges.
    fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support;
        let mut b = vec![lo, 0.0, hi];
        if let Shape::Tabulated { omega, .. } = &self.shape {
            for &w in omega {
                if w < hi {
                    b.push(w);
                }
                if -w > lo {
                    b.push(-w);
                }
            }
        }
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup_by(|a, c| (*a - *c).abs() < 1e-14);
        b
    }

    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// `2π ψ̂(a) ∫_{S^{d-1}} ds e^{i a s·x}`, the closed sphere form of the gain coefficient.
    pub fn gain_coefficient_closed(&self, a: f64, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        2.0 * PI * self.psi_hat(a) * sphere_transform(self.dim, a * r)
    }
}

/// Quadrature parameters for `ψ(x,t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Minimum order of the inner sphere rule; raised with `ω_max|x|`.
    pub eta_order: usize,
    /// Relative tolerance of the refinement checks.
    pub tol: f64,
    /// Spacing of the tabulated `q(τ) = ∫ψ̂(ω)e^{iωτ}dω`.
    pub tau_step: f64,
    /// Upper limit on the tabulation range of `q`.
    pub tau_cap: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            eta_order: 64,
            tol: 1e-8,
            tau_step: 0.02,
            tau_cap: 400.0,
        }
    }
}

const INTERP_POINTS: usize = 10;

/// Evaluator for `ψ(x,t) = ∫dω ψ̂(ω) e^{iωt} ∫_{S^{d-1}} ds e^{iω s·x}`.
///
/// The frequency integral `q(τ)` is tabulated once on `[0, T_q]`, where `T_q`
/// is the first time with `|q| < 1e-15 |q(0)|`; the sphere integral reduces
/// to `∫_{-1}^{1} dη q(t+η|x|) (1-η²)^{(d-3)/2}` and uses Gauss–Jacobi nodes.
#[derive(Debug)]
pub struct CorrelationFunction {
    pub profile: BathProfile,
    pub quad: QuadSpec,
    tau_max: f64,
    table: Vec<Complex64>,
    omega_max: f64,
    truncated: bool,
    rules: Mutex<HashMap<usize, Arc<Rule>>>,
}

fn omega_rule(profile: &BathProfile, tau: f64, refine: usize) -> Rule {
    let bps = profile.breakpoints();
    let width = (0.5f64).min(2.0 / tau.max(1e-3)) / refine as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in bps.windows(2) {
        let panels = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let r = composite_legendre(w[0], w[1], panels, 16);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    let weights = weights
        .iter()
        .zip(&nodes)
        .map(|(w, &x)| w * profile.psi_hat(x))
        .collect();
    Rule { nodes, weights }
}

fn q_direct(rule: &Rule, tau: f64) -> Complex64 {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&w, &c)| Complex64::from_polar(c, w * tau))
        .sum()
}

impl CorrelationFunction {
    pub fn new(profile: BathProfile, quad: QuadSpec) -> Result<Self> {
        let (lo, hi) = profile.support();
        let omega_max = hi.max(-lo);
        let q0: f64 = omega_rule(&profile, 1.0, 1).weights.iter().sum();
        if q0 <= 0.0 {
            return Err(Error::Config("ψ̂ vanishes identically".into()));
        }
        // Locate T_q on a coarse scan.
        let mut tau_max = quad.tau_cap;
        let mut truncated = true;
        let mut below = 0;
        let mut tau = 0.0;
        while tau <= quad.tau_cap {
            let rule = omega_rule(&profile, tau.max(1.0), 1);
            if q_direct(&rule, tau).norm() < 1e-15 * q0 {
                below += 1;
                if below == 4 {
                    tau_max = tau;
                    truncated = false;
                    break;
                }
            } else {
                below = 0;
            }
            tau += 0.25;
        }
        let rule = omega_rule(&profile, tau_max.max(1.0), 1);
        let n = (tau_max / quad.tau_step).ceil() as usize + INTERP_POINTS + 1;
        let table: Vec<Complex64> = (0..n)
            .map(|i| q_direct(&rule, i as f64 * quad.tau_step))
            .collect();

        // Refinement check of the frequency rule at the far end of the table.
        let fine = omega_rule(&profile, tau_max.max(1.0), 2);
        for &t in &[0.0, 0.5 * tau_max, tau_max] {
            let diff = (q_direct(&fine, t) - q_direct(&rule, t)).norm();
            if diff > quad.tol * 1e-2 * q0 {
                return Err(Error::QuadratureNonConvergence(format!(
                    "q({t}) changes by {diff:e} under frequency refinement"
                )));
            }
        }
        Ok(Self {
            profile,
            quad,
            tau_max,
            table,
            omega_max,
            truncated,
            rules: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_defaults(profile: BathProfile) -> Result<Self> {
        Self::new(profile, QuadSpec::default())
    }

    /// Time beyond which `q` is treated as zero.
    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// `true` when `q` had not decayed below `1e-15 q(0)` before `tau_cap`.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// `q(τ) = ∫ ψ̂(ω) e^{iωτ} dω`, interpolated from the table.
    pub fn q(&self, tau: f64) -> Complex64 {
        let s = tau.abs();
        if s > self.tau_max {
            return Complex64::new(0.0, 0.0);
        }
        let h = self.quad.tau_step;
        let i0 = (s / h).floor() as isize - (INTERP_POINTS as isize / 2 - 1);
        let at = |j: isize| -> Complex64 {
            if j < 0 {
                self.table[(-j) as usize].conj()
            } else {
                self.table.get(j as usize).copied().unwrap_or_default()
            }
        };
        // Barycentric Lagrange on equispaced nodes.
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        let mut binom = 1.0;
        for m in 0..INTERP_POINTS {
            let j = i0 + m as isize;
            let dx = s - j as f64 * h;
            if dx == 0.0 {
                let v = at(j);
                return if tau < 0.0 { v.conj() } else { v };
            }
            let w = if m % 2 == 0 { binom } else { -binom } / dx;
            num += at(j) * w;
            den += w;
            binom = binom * (INTERP_POINTS - 1 - m) as f64 / (m + 1) as f64;
        }
        let v = num / den;
        if tau < 0.0 {
            v.conj()
        } else {
            v
        }
    }

    fn rule(&self, order: usize) -> Arc<Rule> {
        let mut cache = self.rules.lock().expect("rule cache poisoned");
        cache
            .entry(order)
            .or_insert_with(|| Arc::new(gauss_jacobi(order, 0.5 * (self.profile.dim as f64 - 3.0))))
            .clone()
    }

    fn default_order(&self, r: f64) -> usize {
        let per = if self.profile.dim == 2 { 1.0 } else { 0.5 };
        ladder_order(
            self.quad.eta_order,
            (self.omega_max * r * per).ceil() as usize + 40,
        )
    }

    /// `ψ(x,t)` for `|x| = r`, with an explicit inner order.
    pub fn psi_radial_with_order(&self, r: f64, t: f64, order: usize) -> Complex64 {
        let d = self.profile.dim;
        if r == 0.0 {
            return self.q(t) * sphere_area(d);
        }
        match d {
            1 => self.q(t + r) + self.q(t - r),
            2 => {
                let step = 2.0 * PI / order as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..order {
                    let tau = t + r * (step * j as f64).cos();
                    if tau.abs() <= self.tau_max {
                        acc += self.q(tau);
                    }
                }
                acc * step
            }
            _ => {
                let rule = self.rule(order);
                let mut acc = Complex64::new(0.0, 0.0);
                for (&eta, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let tau = t + eta * r;
                    if tau.abs() <= self.tau_max {
                        acc += self.q(tau) * w;
                    }
                }
                acc * sphere_area(d - 1)
            }
        }
    }

    /// `ψ(x,t)`; depends on `x` only through `|x|`.
    pub fn psi_radial(&self, r: f64, t: f64) -> Complex64 {
        self.psi_radial_with_order(r, t, self.default_order(r))
    }

    pub fn psi_xt(&self, x: &[f64], t: f64) -> Result<Complex64> {
        if x.len() != self.profile.dim {
            return Err(Error::DimensionMismatch {
                expected: self.profile.dim,
                got: x.len(),
            });
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let order = self.default_order(r);
        let v = self.psi_radial_with_order(r, t, order);
        if r > 0.0 && self.profile.dim >= 2 {
            let fine = self.psi_radial_with_order(r, t, 2 * order);
            let diff = (fine - v).norm();
            if diff > self.quad.tol * fine.norm().max(self.noise_floor()) {
                return Err(Error::QuadratureNonConvergence(format!(
                    "ψ(|x|={r}, t={t}) changes by {diff:e} under refinement"
                )));
            }
        }
        Ok(v)
    }

    /// `ψ(0,0) = |S^{d-1}| ∫ψ̂`, the largest value of `|ψ|`.
    pub fn psi_origin(&self) -> f64 {
        self.table[0].re * sphere_area(self.profile.dim)
    }

    /// Values below this level are dominated by rounding in the quadrature.
    pub fn noise_floor(&self) -> f64 {
        1e-12 * self.psi_origin()
    }

    /// `max |ψ(x,t)|` over radii sampled on `[0, r_max]`, refined near the light cone.
    pub fn sup_abs(&self, t: f64, r_max: f64) -> f64 {
        sample_radii(t, r_max)
            .into_iter()
            .map(|r| self.psi_radial(r, t).norm())
            .fold(0.0, f64::max)
    }

    /// Log-linear fit of `sup_{|x| ≤ v t} |ψ(x,t)|` over `t ∈ [5, t_max]`.
    pub fn check_subluminal_decay(&self, v_star: f64, t_max: f64) -> Result<DecayFit> {
        if !(0.0..1.0).contains(&v_star) {
            return Err(Error::Precondition(format!(
                "v_star must lie in [0,1), got {v_star}"
            )));
        }
        if t_max <= 5.0 {
            return Err(Error::Precondition(format!(
                "t_max must exceed 5, got {t_max}"
            )));
        }
        let floor = self.noise_floor();
        let n = 120;
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for i in 0..=n {
            let t = 5.0 + (t_max - 5.0) * i as f64 / n as f64;
            let s = self.sup_abs(t, v_star * t);
            if s > floor {
                ts.push(t);
                ys.push(s.ln());
            }
        }
        if ts.len() < 8 {
            return Err(Error::FitFailure(format!(
                "only {} samples above the noise floor {floor:e}",
                ts.len()
            )));
        }
        let (slope, intercept, r2) = linear_fit(&ts, &ys);
        let mut warnings = Vec::new();
        if v_star > 0.9 {
            warnings.push(format!(
                "v_star = {v_star} is close to the propagation speed; the rate degrades"
            ));
        }
        if ts.len() <= n / 2 {
            warnings.push(format!(
                "{} of {} samples fell below the noise floor",
                n + 1 - ts.len(),
                n + 1
            ));
        }
        let rate = -slope;
        Ok(DecayFit {
            v_star,
            t_max,
            rate,
            intercept,
            r_squared: r2,
            samples: ts.len(),
            t_last: *ts.last().unwrap(),
            passed: rate > 0.0 && r2 >= 0.95,
            warnings,
        })
    }

    /// Fit of `log sup_x |ψ(x,t)|` against `log(1+t)` over `[t_lo, t_hi]`.
    pub fn check_power_law(&self, t_lo: f64, t_hi: f64) -> Result<PowerLawFit> {
        let n = 40;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut majorant = 0.0f64;
        for i in 0..=n {
            let t = t_lo * (t_hi / t_lo).powf(i as f64 / n as f64);
            let s = self.sup_abs(t, t + 6.0);
            if s > self.noise_floor() {
                xs.push((1.0 + t).ln());
                ys.push(s.ln());
                majorant = majorant.max(s * (1.0 + t).powf(1.5));
            }
        }
        if xs.len() < 8 {
            return Err(Error::FitFailure(format!(
                "only {} samples above the noise floor",
                xs.len()
            )));
        }
        let (slope, _, r2) = linear_fit(&xs, &ys);
        Ok(PowerLawFit {
            exponent: slope,
            r_squared: r2,
            majorant,
            passed: slope <= -1.4,
        })
    }

    /// Partial integrals `∫_0^T sup_x |ψ(x,t)| dt` at `T = t_max/8, t_max/4, t_max/2, t_max`.
    ///
    /// Passes when the increments shrink and the last one stays below what the
    /// `C (1+t)^{-3/2}` majorant fitted on `[t_max/2, t_max]` allows, so the
    /// partial integrals form a Cauchy sequence with the reported tail.
    pub fn check_time_integrability(&self, t_max: f64) -> Result<Integrability> {
        if !(t_max >= 8.0) {
            return Err(Error::Precondition(format!(
                "t_max must be at least 8, got {t_max}"
            )));
        }
        let n = 8 * (t_max / 2.0).ceil() as usize;
        let h = t_max / n as f64;
        let vals: Vec<f64> = (0..=n)
            .map(|i| {
                let t = h * i as f64;
                self.sup_abs(t, t + 6.0)
            })
            .collect();
        let trapezoid = |m: usize| h * (vals[..=m].iter().sum::<f64>() - 0.5 * (vals[0] + vals[m]));
        let marks: Vec<usize> = [8, 4, 2, 1].iter().map(|d| n / d).collect();
        let partials: Vec<f64> = marks.iter().map(|&m| trapezoid(m)).collect();
        let increments: Vec<f64> = partials.windows(2).map(|w| w[1] - w[0]).collect();
        let constant = vals[n / 2..]
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + h * (i + n / 2) as f64).powf(1.5))
            .fold(0.0, f64::max);
        let half = 0.5 * t_max;
        let allowed = 2.0 * constant * ((1.0 + half).powf(-0.5) - (1.0 + t_max).powf(-0.5));
        let tail = 2.0 * constant / (1.0 + t_max).sqrt();
        let partial = *partials.last().unwrap();
        let shrinking = increments.windows(2).all(|w| w[1] < w[0]);
        let last = *increments.last().unwrap();
        Ok(Integrability {
            t_max,
            partials,
            increments,
            partial,
            tail,
            total: partial + tail,
            passed: partial.is_finite() && shrinking && last <= 1.01 * allowed,
        })
    }

    /// `∫_0^∞ ψ(0,t) e^{iat} dt`.
    pub fn half_line_transform(&self, a: f64) -> Result<Complex64> {
        let s = sphere_area(self.profile.dim);
        let eval = |refine: usize| -> Complex64 {
            let panels = ((self.tau_max / 0.1).ceil() as usize).max(1) * refine;
            let rule = composite_legendre(0.0, self.tau_max, panels, 10);
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&t, &w)| self.q(t) * Complex64::from_polar(w, a * t))
                .sum::<Complex64>()
                * s
        };
        let coarse = eval(1);
        let fine = eval(2);
        let diff = (fine - coarse).norm();
        if diff > self.quad.tol * fine.norm() + self.tau_max * self.noise_floor() {
            return Err(Error::QuadratureNonConvergence(format!(
                "half-line transform at a={a} changes by {diff:e}"
            )));
        }
        Ok(fine)
    }

    /// Level shifts `Υ_e = Σ_{e'} |⟨e,We'⟩|² Im ∫_0^∞ ψ(0,t) e^{i(e'-e)t} dt`.
    pub fn lamb_shift(&self, spin: &SpinSystem) -> Result<LambShift> {
        let n = spin.n_levels();
        let mut level_shifts = vec![0.0; n];
        let mut cache: Vec<(f64, f64)> = Vec::new();
        for (e, shift) in level_shifts.iter_mut().enumerate() {
            for f in 0..n {
                let w2 = spin.coupling_sq(e, f);
                if w2 == 0.0 {
                    continue;
                }
                let a = spin.levels[f] - spin.levels[e];
                let im = match cache.iter().find(|(b, _)| *b == a) {
                    Some(&(_, v)) => v,
                    None => {
                        let v = self.half_line_transform(a)?.im;
                        cache.push((a, v));
                        v
                    }
                };
                *shift += w2 * im;
            }
        }
        let coherences = spin
            .bohr_frequencies()
            .into_iter()
            .map(|(e, ep, a)| CoherenceShift {
                from: e,
                to: ep,
                a,
                upsilon: level_shifts[e] - level_shifts[ep],
            })
            .collect();
        Ok(LambShift {
            level_shifts,
            coherences,
        })
    }

    /// `∫ dt e^{-iat} ψ(x,t)` by quadrature in time.
    pub fn gain_coefficient_position(&self, a: f64, x: &[f64]) -> Result<Complex64> {
        if x.len() != self.profile.dim {
            return Err(Error::DimensionMismatch {
                expected: self.profile.dim,
                got: x.len(),
            });
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let order = self.default_order(r);
        let half = self.tau_max + r;
        let eval = |refine: usize| -> Complex64 {
            let width = 0.25 / refine as f64;
            let panels = (2.0 * half / width).ceil() as usize;
            let rule = composite_legendre(-half, half, panels, 16);
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&t, &w)| {
                    self.psi_radial_with_order(r, t, order) * Complex64::from_polar(w, -a * t)
                })
                .sum()
        };
        let coarse = eval(1);
        let fine = eval(2);
        let diff = (fine - coarse).norm();
        if diff > self.quad.tol * fine.norm() + 2.0 * half * self.noise_floor() {
            return Err(Error::QuadratureNonConvergence(format!(
                "time quadrature of the gain coefficient changes by {diff:e}"
            )));
        }
        Ok(fine)
    }
}

/// Radii for the supremum over `x`: a unit-spaced sweep of `[0, r_max]` plus a
/// fine sweep around the light cone `|x| = t`.
fn sample_radii(t: f64, r_max: f64) -> Vec<f64> {
    let mut rs: Vec<f64> = (0..=r_max.floor() as usize).map(|i| i as f64).collect();
    rs.push(r_max);
    let lo = (t - 4.0).max(0.0);
    let hi = (t + 4.0).min(r_max);
    if hi > lo {
        let n = ((hi - lo) / 0.1).ceil() as usize;
        rs.extend((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
    }
    rs
}

/// Least-squares line `y = slope·x + intercept` and its `R²`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub v_star: f64,
    pub t_max: f64,
    /// Fitted exponential rate `g_R` of the cone supremum.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// Last time whose supremum stayed above the noise floor.
    pub t_last: f64,
    pub passed: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub r_squared: f64,
    /// `max_t (1+t)^{3/2} sup_x |ψ(x,t)|` over the sampled times.
    pub majorant: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integrability {
    pub t_max: f64,
    /// Partial integrals at `t_max/8, t_max/4, t_max/2, t_max`.
    pub partials: Vec<f64>,
    pub increments: Vec<f64>,
    pub partial: f64,
    pub tail: f64,
    pub total: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceShift {
    pub from: usize,
    pub to: usize,
    /// Bohr frequency `e - e'` of the coherence `|e⟩⟨e'|`.
    pub a: f64,
    /// `Υ_e - Υ_{e'}`.
    pub upsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambShift {
    pub level_shifts: Vec<f64>,
    pub coherences: Vec<CoherenceShift>,
}

impl LambShift {
    pub fn for_pair(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.level_shifts[from] - self.level_shifts[to]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BathSpec;
    use crate::quadrature::composite_legendre;

    fn gaussian(dim: usize, beta: f64) -> BathProfile {
        BathProfile::new(&BathSpec::gaussian(2.0), beta, dim).unwrap()
    }

    #[test]
    fn psi_hat_vanishes_at_zero_and_is_positive() {
        for dim in 1..=6 {
            let p = gaussian(dim, 1.0);
            assert_eq!(p.psi_hat(0.0), 0.0);
            for i in 1..200 {
                let w = -10.0 + 0.1 * i as f64;
                assert!(p.psi_hat(w) >= 0.0);
            }
            // Continuity at the origin.
            assert!(p.psi_hat(1e-6) < 1e-9 && p.psi_hat(-1e-6) < 1e-9);
        }
    }

    #[test]
    fn kms_relation_on_fine_grid() {
        for dim in [1, 2, 4] {
            let p = gaussian(dim, 1.3);
            for i in 1..=1000 {
                let w = 0.01 * i as f64;
                let lhs = p.psi_hat(-w);
                let rhs = (-1.3 * w).exp() * p.psi_hat(w);
                assert!((lhs - rhs).abs() <= 1e-12 * p.psi_hat(w));
            }
        }
    }

    #[test]
    fn regression_pin_d4() {
        let p = gaussian(4, 1.0);
        let want = (-0.25f64).exp() / (1.0 - (-1.0f64).exp());
        assert!((p.psi_hat(1.0) - want).abs() < 1e-15);
        assert!((p.psi_hat(-1.0) / p.psi_hat(1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn built_in_profile_is_analytic_through_zero() {
        // A Taylor polynomial fitted on ω > 0 must also describe ω < 0.
        for dim in 1..=6 {
            let p = gaussian(dim, 1.0);
            let h = 1e-2;
            let second = (p.psi_hat(h) - 2.0 * p.psi_hat(0.0) + p.psi_hat(-h)) / (h * h);
            let fourth = (p.psi_hat(2.0 * h) - 4.0 * p.psi_hat(h) + 6.0 * p.psi_hat(0.0)
                - 4.0 * p.psi_hat(-h)
                + p.psi_hat(-2.0 * h))
                / h.powi(4);
            assert!(
                second.abs() < 10.0 && fourth.abs() < 100.0,
                "dim {dim}: {second} {fourth}"
            );
        }
    }

    #[test]
    fn tabulated_profile_interpolates_and_obeys_kms() {
        let spec = BathSpec {
            kind: BathKind::Tabulated,
            cutoff: 1.0,
            table: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]],
        };
        let p = BathProfile::new(&spec, 1.0, 1).unwrap();
        assert_eq!(p.psi_hat(1.0), 1.0);
        assert!((p.psi_hat(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(p.psi_hat(3.0), 0.0);
        assert!((p.psi_hat(-1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    fn corr(dim: usize, beta: f64) -> CorrelationFunction {
        CorrelationFunction::with_defaults(gaussian(dim, beta)).unwrap()
    }

    #[test]
    fn q_matches_direct_quadrature_off_grid() {
        let c = corr(1, 1.0);
        let p = gaussian(1, 1.0);
        let (lo, hi) = p.support();
        let rule = composite_legendre(lo, hi, 400, 20);
        for &tau in &[0.0, 0.013, 0.77, -1.234, 3.3] {
            let want: Complex64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&w, &c)| Complex64::from_polar(c * p.psi_hat(w), w * tau))
                .sum();
            assert!(
                (c.q(tau) - want).norm() < 1e-11 * c.q(0.0).norm(),
                "tau {tau}"
            );
        }
    }

    #[test]
    fn origin_is_sphere_area_times_q() {
        let c = corr(3, 1.0);
        for &t in &[0.0, 0.5, 2.0] {
            let v = c.psi_xt(&[0.0, 0.0, 0.0], t).unwrap();
            assert!((v - c.q(t) * 4.0 * PI).norm() < 1e-13 * v.norm());
        }
    }

    #[test]
    fn hermiticity_in_time_and_rotation_invariance() {
        let c = corr(3, 1.0);
        for &(x, t) in &[
            ([1.0, 0.0, 0.0], 0.7),
            ([0.0, 2.0, 1.0], 1.9),
            ([3.0, 0.0, 4.0], 4.0),
        ] {
            let a = c.psi_xt(&x, t).unwrap();
            let b = c.psi_xt(&x, -t).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * a.norm().max(c.noise_floor()));
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert!((c.psi_xt(&neg, t).unwrap() - a).norm() < 1e-15);
        }
        let a = c.psi_xt(&[3.0, 0.0, 4.0], 2.0).unwrap();
        let b = c.psi_xt(&[0.0, 5.0, 0.0], 2.0).unwrap();
        assert!((a - b).norm() <= 1e-15 * a.norm());
    }

    #[test]
    fn d1_and_d2_match_sphere_form_of_q() {
        // ψ(x,t) = ∫dω ψ̂(ω) e^{iωt} S(ω|x|), evaluated directly.
        for dim in [1usize, 2, 4] {
            let p = gaussian(dim, 1.0);
            let c = corr(dim, 1.0);
            let (lo, hi) = p.support();
            let rule = composite_legendre(lo, hi, 300, 20);
            let r = 1.7;
            let t = 0.9;
            let want: Complex64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&w, &cw)| {
                    Complex64::from_polar(cw * p.psi_hat(w) * sphere_transform(dim, w * r), w * t)
                })
                .sum();
            let mut x = vec![0.0; dim];
            x[0] = r;
            let got = c.psi_xt(&x, t).unwrap();
            assert!(
                (got - want).norm() < 1e-9 * want.norm(),
                "dim {dim}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn equal_time_correlation_is_real() {
        // ψ(x,0) = ∫ψ̂(ω) S(ω|x|) dω with a real sphere transform.
        let c = corr(2, 1.0);
        let v = c.psi_xt(&[1.0, 0.5], 0.0).unwrap();
        assert!(v.im.abs() < 1e-12 * v.norm());
    }

    #[test]
    fn lamb_shift_matches_principal_value() {
        let beta = 1.0;
        let p = gaussian(1, beta);
        let c = corr(1, beta);
        let a = 1.0;
        let i = c.half_line_transform(a).unwrap();
        // Re I(a) = π|S| ψ̂(-a)
        assert!((i.re - PI * 2.0 * p.psi_hat(-a)).abs() < 1e-8 * i.norm());
        // Im I(a) = |S| PV∫ψ̂(ω)/(ω+a) dω; subtract the pole analytically.
        let (lo, hi) = p.support();
        let rule = composite_legendre(lo, hi, 2000, 16);
        let fa = p.psi_hat(-a);
        let pv: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&w, &cw)| cw * (p.psi_hat(w) - fa) / (w + a))
            .sum::<f64>()
            + fa * ((hi + a) / (-a - lo)).ln();
        assert!(
            (i.im - 2.0 * pv).abs() < 1e-8 * i.norm(),
            "{} vs {}",
            i.im,
            2.0 * pv
        );
    }

    #[test]
    fn lamb_shift_structure() {
        let c = corr(1, 1.0);
        let spin = SpinSystem {
            levels: vec![0.0, 1.0],
            couplings: vec![
                vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
                vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            ],
        };
        let l = c.lamb_shift(&spin).unwrap();
        assert!(l.level_shifts.iter().all(|v| v.is_finite()));
        assert_eq!(l.coherences.len(), 2);
        assert!((l.for_pair(1, 0) + l.for_pair(0, 1)).abs() < 1e-15);
        assert_eq!(l.for_pair(1, 1), 0.0);
    }

    #[test]
    fn gain_coefficient_at_origin_and_zero_weight() {
        let c = corr(2, 1.0);
        let a = 1.0;
        let g = c.gain_coefficient_position(a, &[0.0, 0.0]).unwrap();
        let want = 2.0 * PI * c.profile.psi_hat(a) * 2.0 * PI;
        assert!((g - want).norm() < 1e-6 * want);
        assert!(
            c.gain_coefficient_position(0.0, &[1.0, 0.0])
                .unwrap()
                .norm()
                < 1e-9
        );
    }

    #[test]
    fn gain_coefficient_random_points_d2() {
        let c = corr(2, 1.0);
        for &(a, x) in &[(1.0, [1.0, 2.0]), (-0.7, [3.0, 0.0]), (2.2, [1.0, 1.0])] {
            let g = c.gain_coefficient_position(a, &x).unwrap();
            let want = c.profile.gain_coefficient_closed(a, &x);
            assert!(
                (g.re - want).abs() < 1e-6 * want.abs() && g.im.abs() < 1e-6 * want.abs(),
                "{a}: {g} vs {want}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let c = corr(2, 1.0);
        assert!(matches!(
            c.psi_xt(&[1.0], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, r2) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
