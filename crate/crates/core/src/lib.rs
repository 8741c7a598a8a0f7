//! Natural-language-to-visualization toolkit.
//!
//! The crate covers the whole loop around a visualization-recommending
//! language model: table ingestion and sketching ([`dataset`]), the VegaZero
//! grammar and its Vega-Lite compiler ([`vegazero`]), prompt construction
//! ([`prompt`]), a chat-completion gateway ([`gateway`]), chain-of-thought
//! corpus enrichment and export ([`enrichment`]), completion parsing
//! ([`response`]), the layered evaluation stack ([`evallm`]), corpus import
//! ([`corpus`]), and the blind comparative study plus HTTP service
//! ([`study`], [`service`]).

pub mod config;
pub mod corpus;
pub mod dataset;
pub mod enrichment;
pub mod evallm;
pub mod gateway;
pub mod prompt;
pub mod recommend;
pub mod response;
pub mod service;
pub mod study;
pub mod vegazero;
