//! Perron eigenvalue `f_rw(p)`, spectral gaps, equilibrium state and the
//! diffusion tensor of the population generator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::model::dispersion_grad;

const ITER_CAP: usize = 60;

/// Normalized kernel vector of `m00` by shifted inverse iteration from a
/// perturbed Gibbs ansatz; entries sum to one.
pub fn stationary_state(m00: &DMatrix<f64>) -> Result<DVector<f64>> {
    null_vector(m00)
}

/// Left kernel vector of `m00`, scaled so that its mean is one.
pub fn left_null_vector(m00: &DMatrix<f64>) -> Result<DVector<f64>> {
    let v = null_vector(&m00.transpose())?;
    let mean = v.sum() / v.len() as f64;
    Ok(v / mean)
}

fn null_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    let shift = 1e-10 * scale;
    let shifted = m - DMatrix::<f64>::identity(n, n) * shift;
    let lu = shifted.lu();
    // Slightly non-uniform start, so that no component is accidentally orthogonal.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64 / 101.0);
    let mut residual = f64::INFINITY;
    for _ in 0..ITER_CAP {
        let y = lu.solve(&x).ok_or(Error::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        })?;
        let s = y.sum();
        x = if s.abs() > 0.0 { y / s } else { y.normalize() };
        residual = (m * &x).amax() / (scale * x.amax());
        if residual < 1e-15 {
            return Ok(x);
        }
    }
    if residual < 1e-13 {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            iterations: ITER_CAP,
            residual,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub value: Complex64,
    /// Right eigenvector, normalized to unit total mass.
    pub right: DVector<Complex64>,
    /// Left eigenvector with `left^T right = 1`.
    pub left: DVector<Complex64>,
}

/// Reusable spectral data of the symmetrized `p = 0` block.
pub struct SpectralSolver<'a> {
    pub gen: &'a Generator,
    sym: DMatrix<f64>,
    s: Vec<f64>,
    phi0: DVector<f64>,
    lambda0: f64,
    gap0: f64,
    speed: f64,
    scale: f64,
}

impl<'a> SpectralSolver<'a> {
    pub fn new(gen: &'a Generator) -> Result<Self> {
        let sym = gen.symmetrized_m00();
        let eig = SymmetricEigen::new(sym.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambda0 = eig.eigenvalues[order[0]];
        let gap0 = if order.len() > 1 {
            lambda0 - eig.eigenvalues[order[1]]
        } else {
            f64::INFINITY
        };
        let mut phi0: DVector<f64> = eig.eigenvectors.column(order[0]).into_owned();
        if phi0.sum() < 0.0 {
            phi0 = -phi0;
        }
        let speed = (0..gen.grid.len())
            .map(|i| {
                dispersion_grad(&gen.cfg.dispersion, &gen.grid.point(i))
                    .iter()
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let scale = sym.amax().max(1.0);
        Ok(Self {
            gen,
            s: gen.symmetrizer(),
            sym,
            phi0,
            lambda0,
            gap0,
            speed,
            scale,
        })
    }

    /// Distance from the top eigenvalue to the rest of the spectrum at `p = 0`.
    pub fn gap_at_zero(&self) -> f64 {
        self.gap0
    }

    pub fn eigenvalue_at_zero(&self) -> f64 {
        self.lambda0
    }

    /// `φ̂ = e^{βY/2} φ^eq`, the top eigenvector of the symmetrized block (unit norm).
    pub fn symmetric_ground_state(&self) -> &DVector<f64> {
        &self.phi0
    }

    pub fn symmetric_m00(&self) -> &DMatrix<f64> {
        &self.sym
    }

    fn sym_fiber(&self, p: &[Complex64]) -> DMatrix<Complex64> {
        let kin = self.gen.kinetic(p);
        let nk = self.gen.grid.len();
        let mut m = self.sym.map(|v| Complex64::new(v, 0.0));
        for i in 0..m.nrows() {
            m[(i, i)] += kin[i % nk];
        }
        m
    }

    /// Eigenvalue of `M̂_p` continued from `p = 0` along the straight segment.
    pub fn track(&self, p: &[Complex64]) -> Result<(Complex64, DVector<Complex64>)> {
        let norm = p.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v0 = self.phi0.map(|x| Complex64::new(x, 0.0));
        let mut mu = Complex64::new(self.lambda0, 0.0);
        if norm == 0.0 || self.speed == 0.0 {
            return Ok((mu, v0));
        }
        let max_step = self.gap0 / (4.0 * self.speed);
        let steps = (norm / max_step).ceil().max(1.0) as usize;
        let mut v = v0;
        for s in 1..=steps {
            let frac = s as f64 / steps as f64;
            let ps: Vec<Complex64> = p.iter().map(|z| z * frac).collect();
            let m = self.sym_fiber(&ps);
            let predicted = mu;
            let (mu_new, v_new) = self.rayleigh(&m, mu, v)?;
            if (mu_new - predicted).norm() > 0.5 * self.gap0 {
                return Err(Error::TrackingLoss {
                    p: ps.iter().map(|z| z.re).collect(),
                    reason: format!("eigenvalue jumped from {predicted} to {mu_new}"),
                });
            }
            mu = mu_new;
            v = v_new;
        }
        Ok((mu, v))
    }

    fn rayleigh(
        &self,
        m: &DMatrix<Complex64>,
        mut mu: Complex64,
        mut v: DVector<Complex64>,
    ) -> Result<(Complex64, DVector<Complex64>)> {
        let n = m.nrows();
        let mut residual = f64::INFINITY;
        for it in 0..ITER_CAP {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] -= mu;
            }
            let w = match shifted.lu().solve(&v) {
                Some(w) if w.iter().all(|z| z.is_finite()) => w,
                // Exactly singular: `mu` is already an eigenvalue to working precision.
                _ => return Ok((mu, v)),
            };
            v = w.unscale(w.norm());
            let mv = m * &v;
            let vv = v.transpose() * &v;
            mu = (v.transpose() * &mv)[(0, 0)] / vv[(0, 0)];
            residual = (mv - &v * mu).norm();
            if residual <= 1e-14 * self.scale && it >= 1 {
                return Ok((mu, v));
            }
        }
        if residual <= 1e-11 * self.scale {
            Ok((mu, v))
        } else {
            Err(Error::NonConvergence {
                iterations: ITER_CAP,
                residual,
            })
        }
    }

    /// Perron eigenvalue `f_rw(p)` with right and left eigenvectors of `M_{p,0}`.
    pub fn perron(&self, p: &[Complex64]) -> Result<PerronPair> {
        if p.len() != self.gen.grid.dim {
            return Err(Error::DimensionMismatch {
                expected: self.gen.grid.dim,
                got: p.len(),
            });
        }
        let (value, v) = self.track(p)?;
        let mut right = DVector::from_fn(v.len(), |i, _| v[i] / self.s[i]);
        let mass: Complex64 = right.sum();
        if mass.norm() > 1e-300 {
            right /= mass;
        }
        let mut left = DVector::from_fn(v.len(), |i, _| v[i] * self.s[i]);
        let pairing = (left.transpose() * &right)[(0, 0)];
        left /= pairing;
        Ok(PerronPair { value, right, left })
    }

    pub fn perron_real(&self, p: &[f64]) -> Result<PerronPair> {
        let pc: Vec<Complex64> = p.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.perron(&pc)
    }

    /// All eigenvalues of `M_{p,0}`, sorted by decreasing real part.
    pub fn full_spectrum(&self, p: &[f64]) -> Result<Vec<Complex64>> {
        let pc: Vec<Complex64> = p.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let m = self.sym_fiber(&pc);
        let ev = m.schur().eigenvalues().ok_or(Error::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        })?;
        let mut out: Vec<Complex64> = ev.iter().copied().collect();
        out.sort_by(|a, b| b.re.total_cmp(&a.re));
        Ok(out)
    }
}

/// Convenience wrapper building a fresh solver.
pub fn perron_eigenvalue(gen: &Generator, p: &[Complex64]) -> Result<PerronPair> {
    SpectralSolver::new(gen)?.perron(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub p: Vec<f64>,
    /// Eigenvalue of largest real part.
    pub top: Complex64,
    pub second: Complex64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceBound {
    pub from: usize,
    pub to: usize,
    /// Largest real part of the (diagonal) coherence block.
    pub max_re: f64,
    /// `-(j(e) + j(e'))/2`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub samples: Vec<GapSample>,
    pub gap_at_zero: f64,
    /// Largest sampled `|p|` up to which the gap stays above half its `p = 0` value.
    pub p_star: f64,
    pub g_low: f64,
    pub g_high: f64,
    pub coherence: Vec<CoherenceBound>,
}

/// Gaps from full spectra at the sampled fibers.
pub fn spectral_gaps(solver: &SpectralSolver, p_samples: &[Vec<f64>]) -> Result<GapReport> {
    let gen = solver.gen;
    let samples: Vec<GapSample> = p_samples
        .par_iter()
        .map(|p| {
            let spec = solver.full_spectrum(p)?;
            let top = spec[0];
            let second = spec
                .get(1)
                .copied()
                .unwrap_or(Complex64::new(f64::NEG_INFINITY, 0.0));
            Ok(GapSample {
                p: p.clone(),
                top,
                second,
                gap: top.re - second.re,
            })
        })
        .collect::<Result<_>>()?;
    let gap0 = solver.gap_at_zero();
    let norm = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| norm(&samples[a].p).total_cmp(&norm(&samples[b].p)));
    let mut p_star = 0.0;
    for &i in &order {
        if samples[i].gap > 0.5 * gap0 {
            p_star = norm(&samples[i].p);
        } else {
            break;
        }
    }
    let g_low = samples
        .iter()
        .filter(|s| norm(&s.p) <= p_star)
        .map(|s| s.gap)
        .fold(gap0, f64::min);
    let far: Vec<&GapSample> = samples
        .iter()
        .filter(|s| norm(&s.p) > 0.5 * p_star)
        .collect();
    let g_high = if far.is_empty() {
        f64::NAN
    } else {
        -far.iter()
            .map(|s| s.top.re)
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let zero = vec![Complex64::new(0.0, 0.0); gen.grid.dim];
    let coherence = gen
        .cfg
        .spin
        .bohr_frequencies()
        .into_iter()
        .map(|(from, to, _)| {
            let diag = gen.coherence_diagonal(&zero, from, to, 0.0);
            CoherenceBound {
                from,
                to,
                max_re: diag.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
                bound: -0.5 * (gen.escape[from] + gen.escape[to]),
            }
        })
        .collect();
    Ok(GapReport {
        samples,
        gap_at_zero: gap0,
        p_star,
        g_low,
        g_high,
        coherence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianDiffusion {
    /// Richardson-extrapolated `D = -∇²f_rw(0)`.
    pub d: Vec<Vec<f64>>,
    pub d_h: Vec<Vec<f64>>,
    pub d_half: Vec<Vec<f64>>,
    pub h: f64,
    pub gradient: Vec<f64>,
    pub max_imag: f64,
    pub f_zero: Complex64,
    pub relative_change: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn hessian_at(solver: &SpectralSolver, h: f64) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    let d = solver.gen.grid.dim;
    let f = |p: Vec<f64>| -> Result<Complex64> { Ok(solver.perron_real(&p)?.value) };
    let f0 = f(vec![0.0; d])?;
    let mut hess = DMatrix::<f64>::zeros(d, d);
    let mut grad = vec![0.0; d];
    let mut max_imag = 0.0f64;
    let unit = |i: usize, s: f64| -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = s;
        v
    };
    for i in 0..d {
        let fp = f(unit(i, h))?;
        let fm = f(unit(i, -h))?;
        let second = -(fp - f0 * 2.0 + fm) / (h * h);
        hess[(i, i)] = second.re;
        max_imag = max_imag.max(second.im.abs());
        grad[i] = ((fp - fm) / (2.0 * h)).norm();
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut pp = vec![0.0; d];
            pp[i] = h;
            pp[j] = h;
            let mut pm = pp.clone();
            pm[j] = -h;
            let mp: Vec<f64> = pm.iter().map(|x| -x).collect();
            let mm: Vec<f64> = pp.iter().map(|x| -x).collect();
            let v = -(f(pp)? - f(pm)? - f(mp)? + f(mm)?) / (4.0 * h * h);
            hess[(i, j)] = v.re;
            hess[(j, i)] = v.re;
            max_imag = max_imag.max(v.im.abs());
        }
    }
    Ok((hess, grad, max_imag))
}

/// `D = -∇²f_rw(0)` by central differences at `h` and `h/2` with Richardson extrapolation.
pub fn diffusion_tensor_hessian(solver: &SpectralSolver, h: f64) -> Result<HessianDiffusion> {
    let (dh, grad_h, imag_h) = hessian_at(solver, h)?;
    let (dh2, grad_h2, imag_h2) = hessian_at(solver, 0.5 * h)?;
    let scale = dh2.amax();
    let relative_change = if scale < 1e-12 {
        (&dh - &dh2).amax()
    } else {
        (&dh - &dh2).amax() / scale
    };
    if relative_change > 1e-4 {
        return Err(Error::FdInconsistency { relative_change });
    }
    let d = (&dh2 * 4.0 - &dh) / 3.0;
    let gradient = grad_h
        .iter()
        .zip(&grad_h2)
        .map(|(a, b)| a.max(*b))
        .collect();
    Ok(HessianDiffusion {
        d: to_rows(&d),
        d_h: to_rows(&dh),
        d_half: to_rows(&dh2),
        h,
        gradient,
        max_imag: imag_h.max(imag_h2),
        f_zero: Complex64::new(solver.eigenvalue_at_zero(), 0.0),
        relative_change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaDiffusion {
    pub d: Vec<Vec<f64>>,
    /// `max_i |⟨φ̂, ∂_iε φ̂⟩| / (‖φ̂‖ ‖∂_iε φ̂‖)`, zero when the first-order shift vanishes.
    pub solvability: f64,
    pub iterations: Vec<usize>,
}

/// `D_ij = 2⟨∂_iε φ̂, A^{-1} ∂_jε φ̂⟩ / ⟨φ̂, φ̂⟩` with `A = -M̂_{0,0}` inverted on the
/// complement of its kernel by projected conjugate gradients.
pub fn diffusion_tensor_formula(solver: &SpectralSolver) -> Result<FormulaDiffusion> {
    let gen = solver.gen;
    let d = gen.grid.dim;
    let nk = gen.grid.len();
    let n = gen.state_dim();
    let phi = solver.symmetric_ground_state();
    let grads: Vec<Vec<f64>> = (0..nk)
        .map(|i| dispersion_grad(&gen.cfg.dispersion, &gen.grid.point(i)))
        .collect();
    let a = -solver.symmetric_m00();
    let rhs: Vec<DVector<f64>> = (0..d)
        .map(|ax| DVector::from_fn(n, |i, _| grads[i % nk][ax] * phi[i]))
        .collect();
    let mut solvability = 0.0f64;
    for b in &rhs {
        let bn = b.norm();
        if bn > 0.0 {
            solvability = solvability.max(phi.dot(b).abs() / (phi.norm() * bn));
        }
    }
    let mut sols = Vec::with_capacity(d);
    let mut iterations = Vec::with_capacity(d);
    for b in &rhs {
        let (x, it) = projected_cg(&a, b, phi, 1e-10, 10 * n)?;
        sols.push(x);
        iterations.push(it);
    }
    let norm2 = phi.dot(phi);
    let dm = DMatrix::from_fn(d, d, |i, j| 2.0 * rhs[i].dot(&sols[j]) / norm2);
    let dm = (&dm + dm.transpose()) * 0.5;
    Ok(FormulaDiffusion {
        d: to_rows(&dm),
        solvability,
        iterations,
    })
}

/// Conjugate gradients for `A x = b` on the orthogonal complement of `kernel`.
fn projected_cg(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    kernel: &DVector<f64>,
    tol: f64,
    cap: usize,
) -> Result<(DVector<f64>, usize)> {
    let kk = kernel.dot(kernel);
    let project = |v: &mut DVector<f64>| {
        let c = kernel.dot(v) / kk;
        v.axpy(-c, kernel, 1.0);
    };
    let mut r = b.clone();
    project(&mut r);
    let bnorm = r.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 1..=cap {
        let ap = a * &p;
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        project(&mut r);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= tol * bnorm {
            project(&mut x);
            return Ok((x, it));
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    Err(Error::NonConvergence {
        iterations: cap,
        residual: rr.sqrt() / bnorm,
    })
}

/// Everything the spectral route produces for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub f_rw: Vec<(Vec<f64>, Complex64)>,
    pub gap_low: f64,
    pub gap_high: f64,
    pub stationary_deviation: f64,
    pub d_hessian: Vec<Vec<f64>>,
    pub d_formula: Vec<Vec<f64>>,
    pub method_tags: Vec<(String, String)>,
}

impl SpectralReport {
    /// Runs every spectral route at the given fibers; `h` is the finite-difference step.
    pub fn build(solver: &SpectralSolver, p_samples: &[Vec<f64>], h: f64) -> Result<Self> {
        let gen = solver.gen;
        let f_rw = p_samples
            .par_iter()
            .map(|p| Ok((p.clone(), solver.perron_real(p)?.value)))
            .collect::<Result<Vec<_>>>()?;
        let gaps = spectral_gaps(solver, p_samples)?;
        let phi = stationary_state(&gen.m00)?;
        let gibbs = gen.gibbs();
        let stationary_deviation = (&phi - &gibbs).amax() / gibbs.amax();
        let hess = diffusion_tensor_hessian(solver, h)?;
        let formula = diffusion_tensor_formula(solver)?;
        let tag = |q: &str, m: &str| (q.to_string(), m.to_string());
        Ok(Self {
            f_rw,
            gap_low: gaps.g_low,
            gap_high: gaps.g_high,
            stationary_deviation,
            d_hessian: hess.d,
            d_formula: formula.d,
            method_tags: vec![
                tag("f_rw", "eigensolve"),
                tag("gap_low", "eigensolve"),
                tag("gap_high", "eigensolve"),
                tag("stationary", "eigensolve"),
                tag("d_hessian", "finite-difference"),
                tag("d_formula", "formula"),
            ],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BathSpec, DispersionKind, DispersionSpec, GridSpec, ModelConfig, SpinSystem,
    };

    fn reference(n: usize) -> ModelConfig {
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

    #[test]
    fn stationary_state_is_gibbs_uniform() {
        let g = Generator::new(&reference(32)).unwrap();
        let x = stationary_state(&g.m00).unwrap();
        assert!((&x - g.gibbs()).amax() < 1e-8 * g.gibbs().amax());
        let ratio = x[0] / x[32];
        assert!((ratio - 1f64.exp()).abs() < 1e-8);
        let l = left_null_vector(&g.m00).unwrap();
        assert!(l.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn perron_at_zero_and_small_p() {
        let g = Generator::new(&reference(32)).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        let f0 = s.perron_real(&[0.0]).unwrap();
        assert!(f0.value.norm() < 1e-10);
        assert!((f0.right.map(|z| z.re) - g.gibbs()).amax() < 1e-10);
        let fp = s.perron_real(&[0.2]).unwrap().value;
        let fm = s.perron_real(&[-0.2]).unwrap().value;
        assert!(fp.re < 0.0);
        assert!((fp - fm.conj()).norm() < 1e-10);
        // Right eigenvector really is one.
        let pair = s.perron_real(&[0.2]).unwrap();
        let m = g.fiber_real_p(&[0.2]);
        assert!((&m * &pair.right - &pair.right * pair.value).norm() < 1e-9);
        let lt = pair.left.transpose() * &m;
        assert!((lt - pair.left.transpose() * pair.value).norm() < 1e-9);
    }

    #[test]
    fn tracked_value_is_top_of_full_spectrum() {
        let g = Generator::new(&reference(32)).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        for p in [0.05, 0.3] {
            let spec = s.full_spectrum(&[p]).unwrap();
            let f = s.perron_real(&[p]).unwrap().value;
            assert!((spec[0] - f).norm() < 1e-9, "p {p}: {} vs {f}", spec[0]);
        }
    }

    #[test]
    fn projector_preserves_mass() {
        let g = Generator::new(&reference(32)).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        let pair = s.perron_real(&[0.0]).unwrap();
        let rho = DVector::from_fn(g.state_dim(), |i, _| {
            Complex64::new(((i * 37) % 11) as f64 + 1.0, 0.0)
        });
        let rho = &rho / rho.sum();
        let proj = &pair.right * (pair.left.transpose() * &rho)[(0, 0)];
        assert!((proj.sum() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hessian_and_formula_agree() {
        let g = Generator::new(&reference(32)).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        let h = diffusion_tensor_hessian(&s, 1e-3).unwrap();
        let f = diffusion_tensor_formula(&s).unwrap();
        assert!(f.solvability < 1e-10);
        assert!(h.gradient[0] < 1e-8 && h.max_imag < 1e-8);
        let (a, b) = (h.d[0][0], f.d[0][0]);
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-6 * b, "{a} vs {b}");
    }

    #[test]
    fn constant_dispersion_does_not_diffuse() {
        let mut cfg = reference(16);
        cfg.dispersion = DispersionSpec {
            kind: DispersionKind::CosineSeries,
            coefficients: vec![0.0],
        };
        let g = Generator::new(&cfg).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        assert_eq!(diffusion_tensor_formula(&s).unwrap().d[0][0], 0.0);
        assert!(diffusion_tensor_hessian(&s, 1e-3).unwrap().d[0][0].abs() < 1e-12);
    }

    #[test]
    fn coherence_bounds_exact() {
        let g = Generator::new(&reference(16)).unwrap();
        let s = SpectralSolver::new(&g).unwrap();
        let r = spectral_gaps(&s, &[vec![0.0], vec![0.5]]).unwrap();
        for c in &r.coherence {
            assert_eq!(c.max_re, c.bound);
        }
        assert!(r.g_low > 0.0);
    }
}
