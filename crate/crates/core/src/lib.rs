//! Runtime kernel for contract-bounded job performers.
//!
//! The kernel turns a declarative job contract (an AJD document) into a
//! governed closed-loop run: a planner stand-in manifests bounded execution
//! specifications from trigger events and injected context, a jurisdictional
//! guardrail filters every step before it touches the simulated workplace,
//! dual verification channels (callbacks and confirms) convert opaque world
//! changes into certified evidence, and an append-only knowledge ledger
//! feeds each cycle's verified results back as the next cycle's context.
//! Two bundled scenario fixtures — a delegated travel proxy and an
//! autonomous industrial supervisor — exercise the whole loop, including
//! fault injection and the open-loop failure modes the verification
//! machinery exists to prevent.

#![forbid(unsafe_code)]

pub mod ajd;
pub mod avr;
pub mod fact;
pub mod ledger;
pub mod performer;
pub mod scenario;
pub mod trace;
pub mod verification;
pub mod world;
