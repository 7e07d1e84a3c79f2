//! Structured experiment reports (serialization).
