//! Brute-force references and end-to-end scenarios. The references are
//! written from the definitions, without sharing code with the library,
//! so agreement between the two is evidence rather than tautology.

pub mod oracles;
pub mod scenarios;
