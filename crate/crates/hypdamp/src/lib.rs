//! Scenario files, reports and the thread pool behind the `hypdamp`
//! command line.

pub mod export;
pub mod ops;
pub mod output;
pub mod pool;
pub mod scenario;

pub use ops::{run, DgcsMode, Failure, Outcome, RunError};
pub use pool::Pool;
pub use scenario::{resolve, Operation, Override, Scenario, ScenarioError, Source};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// An unconditional audit failed.
    pub const AUDIT: u8 = 1;
    /// Unreadable, malformed or invalid scenario.
    pub const SCHEMA: u8 = 2;
    /// IO or numerical failure.
    pub const RUNTIME: u8 = 3;
}
