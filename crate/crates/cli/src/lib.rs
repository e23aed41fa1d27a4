//! Scenario loading, solver orchestration, and result serialization.

pub mod scenario;
