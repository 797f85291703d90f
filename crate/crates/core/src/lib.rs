//! Sweeping-process formulation of quasi-static elastoplasticity.
//!
//! Stress trajectories of spring networks and a discretized bar are computed
//! by Moreau's catch-up scheme over the moving set `(Σ − σ̃(t)) ∩ V`; strain
//! rates are recovered from the normal-cone inclusion, and the failure of that
//! inclusion under mesh refinement is measured.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod linalg;
pub mod lp;
pub mod qp;
pub mod geometry;
pub mod elastic;
pub mod sweep;
pub mod strain;
pub mod duality;
pub mod hardening;
pub mod scenario;
pub mod pipeline;
pub mod output;
