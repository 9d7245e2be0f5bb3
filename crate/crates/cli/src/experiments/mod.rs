//! Named experiments. Each reads its own `params` object and returns a [`Report`].

pub mod finite;
pub mod mc;
pub mod zigzag;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::Report;

pub type Runner = fn(&ExperimentConfig) -> Result<Report>;

pub struct Experiment {
    pub name: &'static str,
    /// The statement the experiment checks, in one line.
    pub claim: &'static str,
    pub run: Runner,
}

/// Catalog in a fixed order.
pub const EXPERIMENTS: &[Experiment] = &[
    Experiment {
        name: "zoo-structure",
        claim: "every kernel constructor is (mu,Q)-reversible and both reversible parts satisfy detailed balance",
        run: finite::zoo_structure,
    },
    Experiment {
        name: "random-pairs",
        claim: "ordering theorem: Dirichlet dominance of reversible parts gives var <= for Qf=f and >= for Qf=-f",
        run: finite::random_pairs,
    },
    Experiment {
        name: "gustafson-ring",
        claim: "Gustafson's guided walk is a metropolized flow and beats the collapsed random walk",
        run: finite::gustafson,
    },
    Experiment {
        name: "lifted-ordering",
        claim: "lifted-chain theorem: minimal switching rate <= convex <= maximal <= collapsed chain",
        run: finite::lifted_ordering,
    },
    Experiment {
        name: "neal-ordering",
        claim: "Neal's non-backtracking theorem: removing backtracking never increases var_lambda",
        run: finite::neal_ordering,
    },
    Experiment {
        name: "neal-identity",
        claim: "pair-chain identity relating var_lambda(g, P_i) to var_lambda(f, T_i)",
        run: finite::neal_identity,
    },
    Experiment {
        name: "two-cycle-extra-chance",
        claim: "two-cycle identities; extra-chance var_lambda is nonincreasing in the number of chances",
        run: finite::two_cycle_extra_chance,
    },
    Experiment {
        name: "ghmc-phi-compare",
        claim: "acceptance-function theorem: Metropolis beats Barker for metropolized flows and GHMC",
        run: mc::ghmc_phi_compare,
    },
    Experiment {
        name: "phi-eps-bounds",
        claim: "penalty acceptance phi_eps: symmetry, monotone in eps, closed form, and the sqrt(e^eps-1) gap bound",
        run: zigzag::phi_eps_bounds,
    },
    Experiment {
        name: "zigzag-correctness",
        claim: "Zig-Zag sampler: invariant occupation moments and exact first-event law under thinning",
        run: zigzag::zigzag_correctness,
    },
    Experiment {
        name: "zigzag-1d-gamma",
        claim: "Zig-Zag intensity theorem: adding gamma to the canonical rate cannot reduce the variance",
        run: zigzag::zigzag_1d_gamma,
    },
    Experiment {
        name: "zigzag-2d-refresh",
        claim: "Zig-Zag refreshment theorem: per-coordinate flips dominate full velocity refreshment",
        run: zigzag::zigzag_2d_refresh,
    },
];

pub fn find(name: &str) -> Option<&'static Experiment> {
    EXPERIMENTS.iter().find(|e| e.name == name)
}
