//! Pairing diagrams: enumeration of shapes, irreducibility classes and Monte
//! Carlo estimates of the diagram integrals together with their a-priori bounds.

use std::fmt;

use rand::Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::trajectory_rng;
use crate::stats::pairwise_sum;

const MAX_ENUMERATION: usize = 8;
const CHUNK: usize = 1 << 14;

/// Shape of a diagram: `pattern[pos]` is the pair occupying the `pos`-th
/// smallest time, pairs labelled in order of their left endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiagramClass {
    pub n: usize,
    pub pattern: Vec<usize>,
}

impl DiagramClass {
    /// `(u, v)` positions of every pair, sorted by `u`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(usize::MAX, usize::MAX); self.n];
        for (pos, &p) in self.pattern.iter().enumerate() {
            if out[p].0 == usize::MAX {
                out[p].0 = pos;
            } else {
                out[p].1 = pos;
            }
        }
        out
    }

    /// Builds a class from 0-based position pairs.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        let n = pairs.len();
        let mut slots = vec![usize::MAX; 2 * n];
        let mut sorted = pairs.to_vec();
        sorted.sort();
        for (i, &(u, v)) in sorted.iter().enumerate() {
            if u >= v || v >= 2 * n || slots[u] != usize::MAX || slots[v] != usize::MAX {
                return Err(Error::Precondition(format!("invalid pairing {pairs:?}")));
            }
            slots[u] = i;
            slots[v] = i;
        }
        Ok(Self { n, pattern: slots })
    }

    /// Parses the compact notation `(13)(24)` or `(1,3)(2,4)`, 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for group in text.split(')').map(str::trim).filter(|g| !g.is_empty()) {
            let inner = group
                .strip_prefix('(')
                .ok_or_else(|| Error::Config(format!("bad pairing group '{group}'")))?;
            let nums: Vec<usize> = if inner.contains(',') {
                inner
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()
            } else {
                inner
                    .chars()
                    .map(|c| c.to_string().parse())
                    .collect::<std::result::Result<_, _>>()
            }
            .map_err(|_| Error::Config(format!("bad pairing group '{group}'")))?;
            if nums.len() != 2 || nums[0] == 0 || nums[1] == 0 {
                return Err(Error::Config(format!("bad pairing group '{group}'")));
            }
            pairs.push((nums[0] - 1, nums[1] - 1));
        }
        Self::from_pairs(&pairs)
    }

    fn gaps_covered(&self, skip: Option<usize>) -> bool {
        let pairs = self.pairs();
        (0..2 * self.n - 1).all(|g| {
            pairs
                .iter()
                .enumerate()
                .any(|(i, &(u, v))| Some(i) != skip && u <= g && v > g)
        })
    }
}

impl fmt::Display for DiagramClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = 2 * self.n > 9;
        for (u, v) in self.pairs() {
            if wide {
                write!(f, "({},{})", u + 1, v + 1)?;
            } else {
                write!(f, "({}{})", u + 1, v + 1)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Reducible,
    Irreducible,
    MinimallyIrreducible,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reducible => "reducible",
            Self::Irreducible => "irreducible",
            Self::MinimallyIrreducible => "minimally_irreducible",
        })
    }
}

/// All `(2n-1)!!` pairings of `2n` ordered times.
pub fn enumerate_pairings(n: usize) -> Result<Vec<DiagramClass>> {
    if n > MAX_ENUMERATION {
        return Err(Error::Precondition(format!(
            "enumeration is limited to n <= {MAX_ENUMERATION}, got {n}"
        )));
    }
    fn rec(slots: &mut Vec<usize>, next: usize, n: usize, out: &mut Vec<DiagramClass>) {
        let Some(first) = slots.iter().position(|&s| s == usize::MAX) else {
            out.push(DiagramClass {
                n,
                pattern: slots.clone(),
            });
            return;
        };
        slots[first] = next;
        for j in first + 1..slots.len() {
            if slots[j] == usize::MAX {
                slots[j] = next;
                rec(slots, next + 1, n, out);
                slots[j] = usize::MAX;
            }
        }
        slots[first] = usize::MAX;
    }
    let mut out = Vec::new();
    rec(&mut vec![usize::MAX; 2 * n], 0, n, &mut out);
    Ok(out)
}

/// Irreducible: the pair intervals cover the whole span without a gap.
/// Minimally irreducible: additionally, removing any pair opens a gap.
pub fn classify(dc: &DiagramClass) -> Classification {
    if dc.n == 0 || !dc.gaps_covered(None) {
        return Classification::Reducible;
    }
    // Removal only shrinks the covered set, so single-pair removals decide minimality.
    if dc.n == 1 || (0..dc.n).all(|i| !dc.gaps_covered(Some(i))) {
        Classification::MinimallyIrreducible
    } else {
        Classification::Irreducible
    }
}

/// A diagram with explicit times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    pub pairs: Vec<(f64, f64)>,
}

impl Diagram {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut times: Vec<f64> = pairs.iter().flat_map(|&(u, v)| [u, v]).collect();
        if pairs.iter().any(|&(u, v)| !(u < v)) {
            return Err(Error::Precondition("every pair needs u < v".into()));
        }
        if pairs.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Precondition("left times must increase".into()));
        }
        times.sort_by(|a, b| a.total_cmp(b));
        if times.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition("two times coincide".into()));
        }
        Ok(Self { pairs })
    }

    pub fn class(&self) -> DiagramClass {
        let mut tagged: Vec<(f64, usize)> = self
            .pairs
            .iter()
            .enumerate()
            .flat_map(|(i, &(u, v))| [(u, i), (v, i)])
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        DiagramClass {
            n: self.pairs.len(),
            pattern: tagged.into_iter().map(|t| t.1).collect(),
        }
    }

    pub fn classify(&self) -> Classification {
        classify(&self.class())
    }

    /// Long diagrams contain a pair spanning more than `tau`.
    pub fn is_long(&self, tau: f64) -> bool {
        self.pairs.iter().any(|&(u, v)| v - u > tau)
    }
}

/// Pair kernel `k(t) = c e^{-λ t}` on `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpKernel {
    pub c: f64,
    pub lambda: f64,
}

impl ExpKernel {
    pub fn new(c: f64, lambda: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "kernel needs c >= 0 and lambda > 0, got c={c}, lambda={lambda}"
            )));
        }
        Ok(Self { c, lambda })
    }

    /// Accepts `c*exp(-l*t)`, `c*exp(-t)`, `exp(-l*t)` and a bare `0`.
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || {
            Error::Config(format!(
                "cannot parse kernel '{text}', expected c*exp(-l*t)"
            ))
        };
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
        if let Ok(v) = s.parse::<f64>() {
            return if v == 0.0 {
                Self::new(0.0, 1.0)
            } else {
                Err(bad())
            };
        }
        let (c, rest) = match s.find("exp(") {
            Some(0) => (1.0, &s[..]),
            Some(i) => {
                let pre = s[..i].strip_suffix('*').ok_or_else(bad)?;
                (num(pre)?, &s[i..])
            }
            None => return Err(bad()),
        };
        let arg = rest
            .strip_prefix("exp(-")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let lambda = if arg == "t" {
            1.0
        } else {
            num(arg.strip_suffix("*t").ok_or_else(bad)?)?
        };
        Self::new(c, lambda)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.c * (-self.lambda * t).exp()
        } else {
            0.0
        }
    }

    /// `‖e^{bt} k‖₁` on the half line.
    pub fn exp_norm(&self, b: f64) -> f64 {
        if self.c == 0.0 {
            0.0
        } else if b < self.lambda {
            self.c / (self.lambda - b)
        } else {
            f64::INFINITY
        }
    }

    /// `‖t e^{bt} k‖₁` on the half line.
    pub fn t_exp_norm(&self, b: f64) -> f64 {
        if self.c == 0.0 {
            0.0
        } else if b < self.lambda {
            self.c / (self.lambda - b).powi(2)
        } else {
            f64::INFINITY
        }
    }

    /// `‖k‖₁` restricted to `[0, t]`.
    pub fn norm_on(&self, t: f64) -> f64 {
        self.c * (-(-self.lambda * t).exp_m1()) / self.lambda
    }

    /// Draws from `k / ‖k‖₁` conditioned on `[0, t]` by inversion.
    fn sample_truncated<R: Rng + ?Sized>(&self, rng: &mut R, t: f64) -> f64 {
        let u: f64 = rng.gen();
        let mass = -(-self.lambda * t).exp_m1();
        -(-u * mass).ln_1p() / self.lambda
    }
}

/// Mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            se: self.se.hypot(o.se),
        }
    }
}

/// Monte Carlo mean of `weight(rng)` with deterministic chunked streams.
fn mc_mean<F>(samples: usize, seed: u64, stream_base: u64, weight: F) -> Estimate
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK).max(1);
    let parts: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trajectory_rng(seed, stream_base + c as u64);
            let m = CHUNK.min(samples - c * CHUNK);
            let ws: Vec<f64> = (0..m).map(|_| weight(&mut rng)).collect();
            let sq: Vec<f64> = ws.iter().map(|w| w * w).collect();
            (pairwise_sum(&ws), pairwise_sum(&sq), m)
        })
        .collect();
    let s = pairwise_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let s2 = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Estimate {
        value: mean,
        se: (var / n).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedReport {
    pub t: f64,
    pub n_max: usize,
    pub samples: usize,
    pub per_n: Vec<Estimate>,
    pub total: Estimate,
    /// `e^{t ‖k‖₁} - 1` with the norm taken on `[0, t]`.
    pub bound: f64,
    pub passed: bool,
}

/// Integral of `Π k(v_i - u_i)` over all diagrams in `[0, t]` with at most `n_max` pairs.
pub fn integrate_unconstrained(
    k: &ExpKernel,
    t: f64,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<UnconstrainedReport> {
    if !(t > 0.0) || samples < 2 {
        return Err(Error::Precondition(
            "need t > 0 and at least two samples".into(),
        ));
    }
    let norm = k.norm_on(t);
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let est = if k.c == 0.0 {
            Estimate {
                value: 0.0,
                se: 0.0,
            }
        } else {
            let scale = t.powi(n as i32) / factorial(n) * norm.powi(n as i32);
            let base = (n as u64) << 32;
            mc_mean(samples, seed, base, |rng| {
                // Left times uniform on the ordered simplex; lengths from the kernel.
                (0..n).all(|_| rng.gen::<f64>() * t + k.sample_truncated(rng, t) <= t) as u8 as f64
                    * scale
            })
        };
        per_n.push(est);
    }
    let total = per_n.iter().fold(
        Estimate {
            value: 0.0,
            se: 0.0,
        },
        |a, &b| a.add(b),
    );
    let bound = (t * norm).exp_m1();
    Ok(UnconstrainedReport {
        t,
        n_max,
        samples,
        total,
        bound,
        passed: total.value <= bound + 3.0 * total.se,
        per_n,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub per_n: Vec<Estimate>,
    pub estimate: Estimate,
    pub bound: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn new(per_n: Vec<Estimate>, bound: f64) -> Self {
        let estimate = per_n.iter().fold(
            Estimate {
                value: 0.0,
                se: 0.0,
            },
            |a, &b| a.add(b),
        );
        Self {
            passed: estimate.value <= bound + 3.0 * estimate.se,
            per_n,
            estimate,
            bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kernel: ExpKernel,
    pub a: f64,
    pub a_tilde: f64,
    pub k_norm: f64,
    pub exp_norm_a: f64,
    pub t_exp_norm_a: f64,
    pub exp_norm_a_tilde: f64,
    pub t_exp_norm_a_tilde: f64,
    pub n_max: usize,
    pub samples: usize,
    /// The single-pair integral `∫ e^{at} k(t) dt` in closed form.
    pub single_pair: f64,
    pub minimally_irreducible: BoundCheck,
    pub irreducible: BoundCheck,
    /// Irreducible diagrams with at least two pairs.
    pub irreducible_multi: BoundCheck,
    pub passed: bool,
}

/// Laplace-domain integrals over (minimally) irreducible diagrams, compared
/// with their bounds in terms of weighted norms of the kernel.
pub fn check_irreducible_bounds(
    k: &ExpKernel,
    a: f64,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    let k_norm = k.exp_norm(0.0);
    let a_tilde = a + k_norm;
    let (ea, tea) = (k.exp_norm(a), k.t_exp_norm(a));
    let (eat, teat) = (k.exp_norm(a_tilde), k.t_exp_norm(a_tilde));
    if !(tea < 1.0) || !(teat < 1.0) {
        return Err(Error::Precondition(format!(
            "norm conditions fail: ||t e^(at) k|| = {tea}, ||t e^(ãt) k|| = {teat}"
        )));
    }
    if n_max == 0 || samples < 2 {
        return Err(Error::Precondition(
            "need n_max >= 1 and at least two samples".into(),
        ));
    }
    let length = Exp::new(k.lambda).expect("positive rate");
    let zero = Estimate {
        value: 0.0,
        se: 0.0,
    };
    let mut mir = Vec::new();
    let mut ir = Vec::new();
    for n in 1..=n_max {
        if k.c == 0.0 {
            mir.push(zero);
            ir.push(zero);
            continue;
        }
        let scale = k_norm.powi(n as i32);
        let base = (n as u64) << 32;
        // The chain u1 < u2 < v1 < u3 < v2 < ... is the only minimal shape.
        mir.push(mc_mean(samples, seed, base, |rng| {
            let mut v_prev = 0.0;
            let mut v = rng.sample(length);
            let mut w = scale;
            for _ in 1..n {
                let u = rng.gen_range(v_prev..v);
                w *= v - v_prev;
                let v_next = u + rng.sample(length);
                if v_next <= v {
                    return 0.0;
                }
                v_prev = v;
                v = v_next;
            }
            w * (a * v).exp()
        }));
        ir.push(mc_mean(samples, seed, base | (1 << 31), |rng| {
            let mut u = 0.0;
            let mut reach: f64 = rng.sample(length);
            let mut w = scale;
            for _ in 1..n {
                let u_next = rng.gen_range(u..reach);
                w *= reach - u;
                u = u_next;
                reach = reach.max(u + rng.sample(length));
            }
            w * (a * reach).exp()
        }));
    }
    let minimally_irreducible = BoundCheck::new(mir, ea / (1.0 - tea));
    let irreducible_multi = BoundCheck::new(ir[1..].to_vec(), 2.0 * eat * teat / (1.0 - teat));
    let irreducible = BoundCheck::new(ir, 2.0 * eat / (1.0 - teat));
    let passed = minimally_irreducible.passed && irreducible.passed && irreducible_multi.passed;
    Ok(BoundReport {
        kernel: *k,
        a,
        a_tilde,
        k_norm,
        exp_norm_a: ea,
        t_exp_norm_a: tea,
        exp_norm_a_tilde: eat,
        t_exp_norm_a_tilde: teat,
        n_max,
        samples,
        single_pair: ea,
        minimally_irreducible,
        irreducible,
        irreducible_multi,
        passed,
    })
}
