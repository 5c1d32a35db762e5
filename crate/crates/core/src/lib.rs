//! Core control plane for declarative context orchestration.
//!
//! Organizational knowledge is organized into *domains*, each declared by a
//! YAML manifest ([`manifest`]) and backed by one or more sources reached
//! through a uniform connector contract ([`cxri`]). A versioned registry
//! ([`registry`]) holds the live context units; a router ([`router`])
//! classifies queries, ranks candidate units, and assembles token-budgeted
//! payloads; a permission engine ([`permissions`]) enforces role scoping and
//! tiered action approval; a freshness reconciler ([`freshness`]) keeps the
//! observed state converging on the declared one; and every governed decision
//! lands in an append-only audit stream ([`audit`]).

pub mod audit;
pub mod cxri;
pub mod freshness;
pub mod glob;
pub mod manifest;
pub mod permissions;
pub mod plane;
pub mod registry;
pub mod router;
pub mod timefmt;
pub mod vector;
