//! Double-stimulus impairment-scale study service: each viewer session
//! presents every (original, test image) pair in its own random order,
//! collects 0-100 ratings and reports mean opinion scores.
//!
//! HTTP API (JSON):
//!
//! | route | body / result |
//! |---|---|
//! | `POST /api/session` | `201 {session, total}` |
//! | `GET /api/session/{id}/trial/{k}` | `{session, index, total, trial_token, reference_url, test_url, rated}`, or `{session, end: true, total, rated}` past the last trial |
//! | `POST /api/rating` | body `{session, trial_token, score}`; `{session, index, rated, remaining}` |
//! | `GET /api/results` | `{complete, sessions, ratings, methods: [{method, n, mos, sd, ci95, degenerate}], images: [{image, method, ...}]}` |
//! | `GET /images/{alias}` | image bytes |
//!
//! Errors are `{error}` with 400 (bad input), 404 (unknown session, token
//! or image), or 409 (trial already rated).

mod definition;
mod http;
mod stats;
mod store;

use std::path::PathBuf;

pub use definition::{Stimulus, StudyDefinition, ORIGINAL_DIR};
pub use http::{router, serve, RatingRequest};
pub use stats::{Summary, Z95};
pub use store::{
    Event, ImageResult, MethodResult, RatingAck, Results, SessionInfo, Study, TrialView, MAX_SCORE, MIN_SCORE,
};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("{0}")]
    Invalid(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{path}: {1}", path = .0.display())]
    Io(PathBuf, #[source] std::io::Error),
    #[error("corrupt event log: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, StudyError>;
