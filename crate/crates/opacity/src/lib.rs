//! Histories, execution graphs, and (dynamic durable) opacity checks.

pub mod ddo;
pub mod graph;
pub mod history;

pub use ddo::{check_history_ddo, check_history_ddo_any_pending, check_history_durable_opacity, witness, NoWitness, Verdict};
pub use graph::{
    acyclic, check_dynamic_opacity_execution, check_opacity_execution, check_serializability_execution, fig4,
    Axiom, Graph, Litmus,
};
pub use history::{
    check_wellformed, client_order, ordered_history, statuses, Action, Clause, Event, History, Inv, Item,
    Label, Loc, Res, Status, ThreadId, TxId, Val, Violation,
};
