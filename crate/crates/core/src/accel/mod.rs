//! Accelerator-specific rewrites of region functions: partial
//! quantization and boundary layout transformation.

mod layout;
mod quant;

pub use layout::insert_layout_transforms;
pub use quant::{
    calibrate, collect_region_samples, insert_quant_nodes, quantize_weights, CalibrationSet,
    FunctionQuant, QuantParams,
};
