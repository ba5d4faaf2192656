//! Shipped application scenarios.

pub mod feedback_opt;
pub mod integral;
pub mod lemma;
pub mod network;
pub mod saturated;
pub mod source_seeking;
