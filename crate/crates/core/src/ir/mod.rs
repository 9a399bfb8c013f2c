//! High-level operator-graph IR.

mod graph;
mod infer;
pub mod json;
mod topo;
mod types;
mod validate;

pub use graph::{
    ConstantTensor, Graph, GraphNode, InputDecl, Module, NodeRef, RegionFunction, Source, CALL_OP,
};
pub use infer::{infer_graph, infer_module, infer_types, Functions};
pub use topo::topo_order;
pub use types::{attrs_key, AttrValue, Attrs, DataType, Layout, Tensor, TensorData, TensorType};
pub use validate::{validate, validate_graph, Diagnostic};
