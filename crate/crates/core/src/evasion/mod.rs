//! Strategy language, packet transforms, and in-lab evaluation of
//! evasion strategies.

mod builtins;
mod dsl;
mod engine;
mod evaluate;

pub use builtins::{
    builtin, builtin_names, dns_count, free_pass, sandwich, segmentation_at, DNS_COUNT_VALUE, FREE_PASS_DELAY,
    SANDWICH_PADDING,
};
pub use dsl::{
    parse_strategy, strategy_text, Action, Layer, ParseError, Part, Position, Primitive, Strategy, TamperMode, Tree,
    Trigger,
};
pub use engine::{apply_inbound, apply_outbound, apply_tree, trigger_matches, Scheduled};
pub use evaluate::{evaluate, evaluate_duplicate_question, DnsClient, EvasionReport, Lab, TcpClient};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvasionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown builtin {name:?}; known: {catalog}")]
    UnknownBuiltin { name: String, catalog: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("scenario: {0}")]
    Scenario(String),
}
