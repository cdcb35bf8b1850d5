//! Differentially private distributed DC optimal power flow.
//!
//! The crate provides:
//! - a dense convex QP solver ([`qp`]),
//! - the network data model and case-file parsers ([`case`]),
//! - the centralized DC-OPF reference ([`opf`]),
//! - the consensus-ADMM engine with optional solution perturbation ([`admm`]),
//! - the Laplace mechanism and sensitivity calibration ([`privacy`]),
//! - the worst-case load-inference attack ([`adversary`]),
//! - experiment drivers and CSV reporting used by the `dpopf` binary
//!   ([`harness`]).

pub mod admm;
pub mod adversary;
pub mod case;
pub mod harness;
pub mod opf;
pub mod privacy;
pub mod qp;
