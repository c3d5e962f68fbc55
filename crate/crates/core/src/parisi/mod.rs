//! Gaussian couplings: the Parisi PDE for atomic measures, the Parisi
//! functional and its minimization, limiting effects, and the AMP estimator
//! with its state evolution.
//!
//! Conventions shared by the submodules:
//! - A measure is a step distribution function `μ[0,t] = m_j` on
//!   `[q_j, q_{j+1})`, zero below `q_1`, with `m_J = 1`.
//! - `Φ_μ` solves `∂_tΦ + (β²/2)(∂_xxΦ + μ(t)(∂_xΦ)²) = 0`, `Φ(1,x) = log 2cosh x`.
//! - The interaction matrix passed to AMP is `βG`, the same matrix the outcome
//!   model uses.

mod amp;
mod functional;
mod pde;
mod quadrature;
mod state_evolution;

pub use amp::{
    amp_de, amp_effects, amp_ie, amp_run, amp_stability_probe, AmpDenoiser, AmpInstance,
    AmpOptions, AmpState, AmpSummary, OverlapPoint,
};
pub use functional::{
    limiting_effects, minimize_parisi, parisi_functional, FieldAtom, FieldDistribution,
    LimitingEffects, MinimizeOptions, ParisiSolution,
};
pub use pde::{solve_parisi_pde, GridParams, ParisiMeasure, PdeSlice, PdeSolution};
pub use quadrature::NormalRule;
pub use state_evolution::{state_evolution, StateEvolution};
