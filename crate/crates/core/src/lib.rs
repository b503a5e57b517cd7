//! Symbolic household worlds and mental-state inference.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`domain`]: shared vocabulary (states, predicates, actions, beliefs,
//!   hypotheses, questions) plus the canonical JSON encodings.
//! - [`world`]: deterministic transition and observation functions over
//!   symbolic apartment states, including the camera-side predicate stream.
//! - [`planner`]: belief filtering and a Boltzmann-rational search policy
//!   used both to synthesize agent behavior and to score observed actions.
//! - [`oracle`]: a uniform action-likelihood interface with an exact
//!   symbolic backend and a remote log-probability backend.
//! - [`infer`]: joint goal/belief inference by likelihood-ratio comparison
//!   of hypotheses against replayed episodes.
//! - [`textgen`]: deterministic template grammar mapping states, actions,
//!   and questions to natural-language documents and back.
//! - [`fusion`]: alignment of video-channel predicate streams with
//!   text-channel descriptions into one episode representation.

pub mod domain;
pub mod fusion;
pub mod infer;
pub mod oracle;
pub mod planner;
pub mod textgen;
pub mod world;
