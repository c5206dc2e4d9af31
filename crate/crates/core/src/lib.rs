//! Core algorithms for replay-based RLVR training with online objective
//! reweighting.
//!
//! The crate is organized around the training-loop data flow:
//!
//! 1. [`window`] — per-objective sliding-window loss histories and the
//!    convergence/instability signals derived from them.
//! 2. [`scheduler`] — temperature-softmax conversion of signals into the
//!    per-objective weight vector, plus baseline weighting schemes.
//! 3. [`sampler`] — multi-domain replay sampling strategies (uniform,
//!    proportional, coreset, reasoning-only).
//! 4. [`rewards`] — verifiable reward functions: tag-format parsing,
//!    exact match, bounding-box IoU, token accuracy.
//! 5. [`grpo`] — group-normalized advantages, the clipped surrogate, and
//!    the KL penalty to a reference policy.
//! 6. [`learner`] — a tiny feed-forward net with hand-written gradients,
//!    an autoregressive categorical policy, Adam, and the LR schedule.
//! 7. [`streams`] — synthetic loss-stream generation and EMA smoothing
//!    for reports.
//!
//! Everything here is `no_std`-compatible (with `alloc`); IO, file
//! formats, and the CLI live in the companion `recap-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod grpo;
pub mod learner;
pub(crate) mod math;
pub mod rewards;
pub mod sampler;
pub mod scheduler;
pub mod streams;
pub mod window;

pub use scheduler::{Scheduler, SchedulerConfig, WeightVector};
pub use window::{CConvention, LossSample, ObjectiveId, SlidingWindow, WindowSignals};
