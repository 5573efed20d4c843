//! Core of the nutrilog service: domain model, embedding retrieval, model
//! gateway, storage, the logging pipeline and analytics.

pub mod domain;
pub mod gateway;
pub mod vector_store;
pub mod persistence;
pub mod pipeline;
pub mod analytics;
