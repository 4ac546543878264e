//! Vaccine-stance analytics for short-text social media corpora.
//!
//! The crate is organized as a batch pipeline:
//!
//! * [`corpus`] ingests posts, filters by keyword and splits them into periods;
//! * [`textproc`] holds the shared tokenizer and TF-IDF features;
//! * [`classifier`] and [`evaluation`] train and score the three-way stance model;
//! * [`userstance`] turns per-post labels into per-user, per-period stances;
//! * [`topics`] runs LDA, seeded Labeled LDA and topic merging;
//! * [`stancechange`] and [`neighbors`] study users whose stance changed;
//! * [`pipeline`] wires everything into reproducible, cached stages.

pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod neighbors;
pub mod pipeline;
pub mod seed;
pub mod stancechange;
pub mod synth;
pub mod textproc;
pub mod topics;
pub mod userstance;
