//! Scenario schema (placeholder).
