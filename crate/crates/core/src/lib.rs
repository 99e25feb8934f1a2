//! Variational continuous-matrix-product-state solver for one-dimensional
//! Bose gases.
//!
//! The crate computes ground-state energy densities and local correlators of
//! single and coupled Lieb-Liniger gases with a cMPS ansatz, validates the
//! single-field results against an independent Bethe-ansatz solver, and
//! extracts Luttinger-liquid parameters (v, K and the normal-mode v±, K±)
//! from interpolated energy-density surfaces.
//!
//! Module map:
//! - [`kernel`]: dense complex-matrix primitives and spectral solvers;
//! - [`single`]: single-field ansatz, transfer operator, steady state,
//!   local observables, energy functional;
//! - [`coupled`]: two-species ansatz on the product ancilla space;
//! - [`engine`]: density-constrained minimization (augmented Lagrangian +
//!   quasi-Newton with finite-difference gradients);
//! - [`bethe`]: exact Lieb-Liniger ground-state oracle (Fredholm integral
//!   equation, Gauss-Legendre Nyström);
//! - [`spline`]: not-a-knot cubic and bicubic interpolation with analytic
//!   second derivatives;
//! - [`luttinger`]: energy-surface sweeps and Luttinger-parameter
//!   extraction;
//! - [`exec`]: rayon-backed data-parallel helpers with a sequential
//!   fallback (feature `parallel`, on by default).

pub mod bethe;
pub mod coupled;
pub mod engine;
pub mod exec;
pub mod kernel;
pub mod luttinger;
pub mod single;
pub mod spline;
