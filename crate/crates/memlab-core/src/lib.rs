//! Long-conversation memory engine and benchmark toolkit.
//!
//! Three cooperating parts:
//!
//! - **Memory**: an episodic vector index over extracted key–value pairs,
//!   a periodically compressed scratchpad of salient notes, and a sliding
//!   working-memory window, composed per question ([`orchestrator`]).
//! - **Synthesis**: plan-driven generation of long, coherent user/assistant
//!   conversations plus probing questions across ten memory abilities
//!   ([`synthesis`]).
//! - **Evaluation**: nugget-rubric judging and Kendall tau-b event-ordering
//!   scores, aggregated into ability-level reports ([`evaluator`]).
//!
//! Every model call goes through the [`gateway`], which supports an
//! OpenAI-compatible HTTP provider and a deterministic scripted mock, so the
//! whole pipeline runs offline and byte-reproducibly.

pub mod domain;
pub mod embedding;
pub mod episodic;
pub mod evaluator;
pub mod formats;
pub mod gateway;
pub mod orchestrator;
pub mod prompts;
pub mod scratchpad;
pub mod synthesis;
pub mod token;
