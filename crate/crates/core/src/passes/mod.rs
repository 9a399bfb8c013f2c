//! Hardware-agnostic graph passes.

mod cse;
mod dce;
mod fold;
mod macs;

pub use cse::common_subexpr_elim;
pub use dce::dead_code_elim;
pub use fold::constant_fold;
pub use macs::{count_graph_macs, count_macs, node_macs};

/// Returns `base` if unused by `taken`, else `base_1`, `base_2`, ...
pub(crate) fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .unwrap()
}
