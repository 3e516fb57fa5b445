//! FMEA drafting from maintenance documents with retrieval-augmented
//! generation.
//!
//! The crate is organised along the pipeline: [`ingestion`] turns guides into
//! chunks and table summaries, [`index`] embeds and retrieves them,
//! [`generation`] builds the tree level by level under user supervision,
//! [`persistence`] stores studies and exports them, and [`evaluation`]
//! scores generated failure locations against a gold set.

pub mod evaluation;
pub mod generation;
pub mod index;
pub mod ingestion;
pub mod model;
pub mod persistence;
pub mod service;
