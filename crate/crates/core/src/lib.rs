//! Exact linear-algebra engine for finite-state Markov kernels that are
//! reversible up to an isometric involution, together with constructors for
//! the kernel families used to exercise it.
//!
//! A kernel `P` on a finite space is `(mu, Q)`-reversible when its
//! `mu`-adjoint equals `Q P Q`, where `Q` is the composition operator of a
//! `mu`-preserving state permutation `xi` with `xi o xi = id`. With
//! `Q = Id` this is ordinary detailed balance.
//!
//! * [`finite`]: distributions, kernels, involutions, observables, Dirichlet
//!   forms, discounted asymptotic variances and ordering certificates.
//! * [`zoo`]: ring kernels, lifted chains, guided walks, non-backtracking
//!   pair chains, metropolized flows and extra-chance kernels.
//! * [`potential`]: potentials on `R^d` shared by the continuous samplers.
//! * [`rng`]: seeded, stream-separated random number generators and parallel replicates.
//! * [`stats`]: replicate means and standard errors.

pub mod error;
pub mod finite;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod zoo;

pub use error::{Error, Result};
pub use finite::{
    DeterministicInvolution, FiniteDistribution, KernelMatrix, Observable, OrderingCertificate,
    Side, Sign,
};
