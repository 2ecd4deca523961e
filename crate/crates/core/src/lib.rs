//! Markovian weak-coupling model of a heavy quantum particle hopping on
//! `Z^d`, carrying a finite set of internal levels and coupled to a thermal
//! bath of relativistic bosons.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: the physical model, its standing assumptions and the momentum
//!   grid shared by every numerical module.
//! * [`reservoir`]: the effective squared form factor `ψ̂(ω)`, the space-time
//!   correlation function `ψ(x,t)` and its decay laws, the Lamb shift.
//! * [`generator`]: jump rates and the discretised fiber generators `M_{p,a}`.
//! * [`spectral`]: Perron eigenvalue `f(p)`, spectral gaps, equilibrium state
//!   and the diffusion tensor (Hessian and perturbative routes).
//! * [`kmc`]: kinetic Monte Carlo of the underlying jump process.
//! * [`diagrams`]: pairing combinatorics and the Laplace-domain bounds on
//!   irreducible diagram classes.
//!
//! Time is measured in the rescaled (macroscopic) units in which the
//! coupling constant does not appear: the kinetic term is `∇ε` and the
//! dissipative rates are of order one.

pub mod diagrams;
pub mod error;
pub mod generator;
pub mod kmc;
pub mod model;
pub mod quadrature;
pub mod reservoir;
pub mod spectral;
pub mod stats;

pub use diagrams::{
    check_irreducible_bounds, classify, enumerate_pairings, integrate_unconstrained, BoundReport,
    Classification, Diagram, DiagramClass, ExpKernel,
};
pub use error::{Error, Result};
pub use generator::{
    assemble_fiber, build_rate_table, escape_rates, gain_kernel_crosscheck, symmetrize, FiberBlock,
    Generator, JumpChannel, JumpRateTable, Sector,
};
pub use kmc::{
    cgf_estimate, run_ensemble, CgfEstimate, EnsembleConfig, EnsembleStats, KmcEngine,
    ParticleState,
};
pub use model::{
    dispersion_eval, dispersion_grad, validate_model, BathKind, BathSpec, DispersionKind,
    DispersionSpec, GridSpec, ModelConfig, MomentumGrid, SpinSystem, ValidationReport,
};
pub use reservoir::{
    BathProfile, CorrelationFunction, DecayFit, Integrability, LambShift, PowerLawFit, QuadSpec,
};
pub use spectral::{
    diffusion_tensor_formula, diffusion_tensor_hessian, perron_eigenvalue, spectral_gaps,
    stationary_state, GapReport, PerronPair, SpectralReport, SpectralSolver,
};

pub use num_complex::Complex64;
