//! Noisy-OR latent-variable modeling with five variational inference
//! strategies.
//!
//! The model is a bipartite directed graph over binary causes `z` and binary
//! observations `x` where each active cause independently fails to trigger
//! each observation: `p(x_i = 0 | z) = exp(-theta_i0 - sum_k theta_ik z_k)`.
//! Learning and inference revolve around the ELBO; the positive-observation
//! likelihood is the intractable piece, and the strategies differ in how
//! they approximate it:
//!
//! * **ACP** — an encoder predicts per-dimension bound parameters `psi`, the
//!   posterior takes the conjugate form implied by the upper bound, and the
//!   true-likelihood ELBO is optimized by Monte Carlo with Gumbel-softmax
//!   relaxation.
//! * **AVI** — an encoder predicts the posterior probabilities directly.
//! * **SVI** — per-datum free posterior parameters optimized against the
//!   analytic conjugate lower bound of the ELBO.
//! * **UB-CDI / LB-CDI** — the bound parameters are tightened to the bound's
//!   own optimum by fixed-point iteration and the posterior is read off the
//!   resulting surrogate joint.
//!
//! [`exact`] holds enumeration oracles for small instances, [`datagen`]
//! synthetic dataset construction, [`metrics`] evaluation scores, and
//! [`train`] the mini-batch Adam loop over the tape-based losses in
//! [`loss`].

pub mod adam;
pub mod assign;
pub mod bounds;
pub mod datagen;
pub mod elbo;
pub mod encoder;
pub mod error;
pub mod exact;
pub mod fixpoint;
pub mod flat;
pub mod gumbel;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pmi;
pub mod posterior;
pub mod tape;
pub mod train;

pub use error::{NorError, Result};
pub use model::{BinaryDataset, BoundState, ModelParams, PosteriorFactors};
