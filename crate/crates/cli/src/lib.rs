//! Command-line front end: run checks, read and write trace files.

pub mod app;
pub mod trace;

pub use app::{run, EXIT_ERROR, EXIT_PASS, EXIT_VIOLATION};
pub use trace::{emit_trace, parse_trace, records_from_actions, Kind, OpName, ParseError, Trace, TraceRecord};

/// The opacity illustration as trace files.
pub mod fixtures {
    pub const FIG4: [(&str, &str); 3] = [
        ("fig4a", include_str!("../fixtures/fig4a.jsonl")),
        ("fig4b", include_str!("../fixtures/fig4b.jsonl")),
        ("fig4c", include_str!("../fixtures/fig4c.jsonl")),
    ];
}
