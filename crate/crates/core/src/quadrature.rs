//! Gauss rules and sphere quadratures shared by the reservoir and generator.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Jacobi polynomial `P_n^{(α,α)}(x)` and `P_{n-1}^{(α,α)}(x)` by the three-term recurrence.
fn jacobi_pair(n: usize, alpha: f64, x: f64) -> (f64, f64) {
    let a = alpha;
    let b = alpha;
    let mut p0 = 1.0;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Derivative of `P_n^{(α,α)}` from the pair `(P_n, P_{n-1})`.
fn jacobi_derivative(n: usize, alpha: f64, x: f64, pn: f64, pn1: f64) -> f64 {
    let nf = n as f64;
    let c = 2.0 * nf + 2.0 * alpha;
    (nf * (-c * x) * pn + 2.0 * (nf + alpha) * (nf + alpha) * pn1) / (c * (1.0 - x * x))
}

/// `∫_{-1}^{1} (1-x²)^α dx`.
pub fn jacobi_weight_mass(alpha: f64) -> f64 {
    ((2.0 * alpha + 1.0) * 2f64.ln() + 2.0 * ln_gamma(alpha + 1.0) - ln_gamma(2.0 * alpha + 2.0))
        .exp()
}

/// Gauss–Jacobi rule for the weight `(1-x²)^α` on `[-1,1]`, `α > -1`.
///
/// Roots are found by Newton iteration from the Szegő asymptotic guesses; the
/// weights are renormalised to the exact mass of the weight function.
pub fn gauss_jacobi(n: usize, alpha: f64) -> Rule {
    assert!(n >= 1 && alpha > -1.0);
    let mut nodes = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let denom = n as f64 + alpha + 0.5;
    for k in 1..=n {
        let theta = (k as f64 + 0.5 * alpha - 0.25) * PI / denom;
        let mut x = theta.cos();
        for _ in 0..100 {
            let (pn, pn1) = jacobi_pair(n, alpha, x);
            let dp = jacobi_derivative(n, alpha, x, pn, pn1);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        let (pn, pn1) = jacobi_pair(n, alpha, x);
        let dp = jacobi_derivative(n, alpha, x, pn, pn1);
        nodes.push(x);
        raw.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    // Enforce exact symmetry of the rule about 0.
    for k in 0..n / 2 {
        let m = 0.5 * (nodes[k] - nodes[n - 1 - k]);
        nodes[k] = m;
        nodes[n - 1 - k] = -m;
        let w = 0.5 * (raw[k] + raw[n - 1 - k]);
        raw[k] = w;
        raw[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = raw.iter().sum();
    let scale = jacobi_weight_mass(alpha) / total;
    let weights = raw.into_iter().map(|w| w * scale).collect();
    Rule { nodes, weights }
}

pub fn gauss_legendre(n: usize) -> Rule {
    gauss_jacobi(n, 0.0)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of `order` nodes.
pub fn composite_legendre(a: f64, b: f64, panels: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (x, w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(lo + 0.5 * h * (x + 1.0));
            weights.push(0.5 * h * w);
        }
    }
    Rule { nodes, weights }
}

/// Surface area `|S^{d-1}| = 2π^{d/2}/Γ(d/2)` of the unit sphere in `R^d`.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * (0.5 * d * PI.ln() - ln_gamma(0.5 * d)).exp()
}

/// Quadrature on `S^{d-1}`: unit vectors with weights summing to `|S^{d-1}|`.
///
/// The node set is closed under `s ↦ -s` with equal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// `d = 1`: the two points `±1`. `d = 2`: `m` equally spaced angles
    /// offset by half a step. `d ≥ 3`: product of an `m`-point Gauss–Jacobi
    /// rule in the polar cosine with the rule on `S^{d-2}`.
    pub fn new(dim: usize, m: usize) -> Self {
        match dim {
            0 => panic!("sphere rule needs dim >= 1"),
            1 => SphereRule {
                dim,
                nodes: vec![vec![1.0], vec![-1.0]],
                weights: vec![1.0, 1.0],
            },
            2 => {
                let m = m.max(2);
                let step = 2.0 * PI / m as f64;
                let nodes = (0..m)
                    .map(|j| {
                        let th = step * (j as f64 + 0.5);
                        vec![th.cos(), th.sin()]
                    })
                    .collect();
                SphereRule {
                    dim,
                    nodes,
                    weights: vec![step; m],
                }
            }
            _ => {
                let eta = gauss_jacobi(m.max(1), 0.5 * (dim as f64 - 3.0));
                let lower = SphereRule::new(dim - 1, m);
                let mut nodes = Vec::with_capacity(eta.len() * lower.nodes.len());
                let mut weights = Vec::with_capacity(nodes.capacity());
                for (&x, &w) in eta.nodes.iter().zip(&eta.weights) {
                    let r = (1.0 - x * x).max(0.0).sqrt();
                    for (s, &ws) in lower.nodes.iter().zip(&lower.weights) {
                        let mut v = Vec::with_capacity(dim);
                        v.push(x);
                        v.extend(s.iter().map(|c| r * c));
                        nodes.push(v);
                        weights.push(w * ws);
                    }
                }
                SphereRule {
                    dim,
                    nodes,
                    weights,
                }
            }
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Sphere Fourier transform `∫_{S^{d-1}} ds e^{i z s_1}` (real by symmetry).
///
/// Evaluated with a rule accurate for the given `z`; `d = 2` uses the
/// trapezoid rule in the angle, `d ≥ 3` Gauss–Jacobi in the polar cosine.
pub fn sphere_transform(dim: usize, z: f64) -> f64 {
    let order = ladder_order(64, z.abs().ceil() as usize + 40);
    match dim {
        1 => 2.0 * z.cos(),
        2 => {
            let step = 2.0 * PI / order as f64;
            (0..order)
                .map(|j| (z * (step * j as f64).cos()).cos())
                .sum::<f64>()
                * step
        }
        _ => {
            let rule = gauss_jacobi(order, 0.5 * (dim as f64 - 3.0));
            sphere_area(dim - 1) * rule.integrate(|x| (z * x).cos())
        }
    }
}

/// Smallest `base·2^k` that is at least `want`.
pub fn ladder_order(base: usize, want: usize) -> usize {
    let mut n = base;
    while n < want {
        n *= 2;
    }
    n
}
