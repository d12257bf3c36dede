//! Host side of the line-delimited JSON detector protocol (version 1).
//!
//! The host sends `hello`, `train`, `predict`, `reset` and `shutdown`
//! requests and expects exactly one response per request, except
//! `shutdown` which ends the session without a reply. Image pixels never
//! cross the wire; adapters resolve `image_id`s against the directory given
//! with `--images` at launch.

mod host;
pub mod mock;
pub mod protocol;

pub use host::{
    validate_predictions, BridgeLaunch, BridgeOptions, BridgeSession, PredictionWarnings,
    DEFAULT_DEADLINE,
};
pub use protocol::PROTOCOL_VERSION;
