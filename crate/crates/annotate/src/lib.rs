//! Blind annotation trials for transfer evaluation.
//!
//! An expert rates a seed-determined sample of an unlabeled corpus one
//! document at a time, 0 or 1, without ever seeing a model score. Scores for
//! each registered scorer are computed when the session is created and kept
//! server-side until every document has been rated; the report then gives
//! each scorer's AUC against the ratings.

pub mod server;
pub mod session;

pub use server::{router, serve};
pub use session::{
    AnnotationError, AnnotationSession, AnnotationStore, Clock, FixedClock, Progress, Rating, SessionEvent,
    SessionInfo, SessionReport, SystemClock, Task,
};
