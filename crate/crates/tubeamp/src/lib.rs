//! Robust adaptive tube MPC with online set-membership parameter identification.
//!
//! The crate combines a fixed-complexity polytopic state tube, a set-membership
//! parameter estimator, and a persistence-of-excitation term in the MPC
//! objective. Everything numerical runs through one conic-program interface
//! (`conic`), so LPs, QPs and small SDPs share a single solver contract.
//!
//! Module map:
//! - [`geometry`] — polytope types and LP-based primitives (support,
//!   containment, vertex enumeration, volume).
//! - [`conic`] — backend-neutral conic programs and the interior-point bridge.
//! - [`system`] — the uncertain linear model, regressors, samplers.
//! - [`design`] — offline synthesis of the tube shape, feedback gain and
//!   terminal set.
//! - [`estimator`] — unfalsified sets and the fixed-complexity window update.
//! - [`mpc`] — the online tube MPC problem and control loop.
//! - [`lab`] — scenario runner, ensemble studies, CSV/JSON artifacts.

pub mod conic;
pub mod design;
pub mod estimator;
pub mod geometry;
pub mod lab;
pub mod mpc;
pub mod system;

