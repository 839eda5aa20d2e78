//! Core engine of the research copilot: a manager agent delegating to
//! tool-equipped specialists, reward-gated by an evaluator, over an embedded
//! scholarly data lake and literature corpus.

pub mod artifacts;
pub mod evaluation;
pub mod lake;
pub mod llm;
pub mod orchestrator;
pub mod rag;
pub mod scientometrics;
pub mod session;
pub mod table;
pub mod tags;
pub mod toolkit;
