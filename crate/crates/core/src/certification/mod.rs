//! Quantitative certificates for iterated random Volterra operators: the parameter list,
//! the height chain, the dominating level chain and the covering argument.

pub mod cover;
pub mod domination;
pub mod hchain;
pub mod lchain;
pub mod params;

pub use cover::{ball_bound, cover_and_certify, BallBound, CertificationPlan, PlanBall, SpotCheck};
pub use domination::{domination_check, DominationRow, Step1Report};
pub use hchain::{diamonds_bound, h_chain_step, supermartingale_certificate, HChainState};
pub use lchain::{l_chain_step, l_chain_tail, LState, LTail};
pub use params::{Check, Discrepancy, Overrides, Param, ParameterSet, Provenance};
