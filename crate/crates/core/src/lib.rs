//! Game-based worst-case execution-time analysis for an ARM9 subset.
//!
//! A program parsed from annotated disassembly is executed over a domain of
//! machine words extended with an unknown value. Comparisons on unknown
//! operands become adversary choices; the WCET is the maximum completion
//! time over all adversary strategies, with each path timed cycle-accurately
//! against a five-stage in-order pipeline and parameterized instruction and
//! data caches. Companion analyses check abstraction equivalence, find the
//! longest initial slow-clock window that leaves the WCET unchanged, and
//! export the whole model as a network of timed automata for external
//! cross-checking.

pub mod abstraction;
pub mod arch;
pub mod cache;
pub mod config;
pub mod export;
pub mod isa;
pub mod machine;
pub mod pipeline;
pub mod power;
pub mod search;
