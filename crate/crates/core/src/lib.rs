//! Exact simulators for chained-Zeno counterfactual computation protocols.
//!
//! The crate is organised around a sparse pure-state representation
//! ([`qstate`]) shared by the protocol engine ([`zeno`]), the measurement
//! history formalism ([`histories`]), and the two-qubit appendix protocol
//! ([`jozsa`]). Decoherent runs use an environment-labelled branch ensemble
//! or an equivalent 8x8 density-operator pipeline ([`noise`]), feeding the
//! information-theoretic comparisons in [`info`]. Path-interferometer weak
//! values live in [`interfero`].
//!
//! The core is `no_std` compatible (with `alloc`); enable the `libm` feature
//! instead of `std` for float math on bare targets.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("zenosim-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod error;
pub mod histories;
pub mod info;
pub mod interfero;
pub mod jozsa;
pub(crate) mod math;
pub mod noise;
pub mod qstate;
pub mod zeno;

pub use error::{Error, Result};
pub use qstate::{Amplitude, BasisLabel, PureState, Register, Unitary2};
pub use zeno::{ProtocolParams, ProtocolResult, TallyMode, Variant};
