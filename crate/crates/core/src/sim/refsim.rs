//! fp32 engine interpreting JSON graph payloads with the host kernels.

use std::time::Instant;

use crate::codegen::{codegen_json, decode_json, AccelSubModule, CodegenBackend, PayloadFormat};
use crate::error::{Error, Result};
use crate::interp::run_function;
use crate::ir::{ConstantTensor, Functions, RegionFunction, Tensor};
use crate::runtime::{AccelEngine, EngineFactory, EngineOutput};

pub const REFSIM: &str = "refsim";

pub const REFSIM_OPS: &[&str] = &[
    "conv2d",
    "dense",
    "add",
    "bias_add",
    "relu",
    "max_pool2d",
    "avg_pool2d",
    "softmax",
    "concat",
    "reshape",
    "transpose",
    "layout_transform",
];

pub(crate) fn check_ops(f: &RegionFunction, target: &str, supported: &[&str]) -> Result<()> {
    match f.body.nodes.iter().find(|n| !supported.contains(&n.op.as_str())) {
        Some(n) => Err(Error::Unsupported {
            op: n.op.clone(),
            target: target.to_string(),
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_format(sub: &AccelSubModule, want: PayloadFormat) -> Result<()> {
    if sub.format == want {
        Ok(())
    } else {
        Err(Error::Decode(format!(
            "`{}` has a {} payload, expected {want}",
            sub.fn_name, sub.format
        )))
    }
}

pub struct RefSimBackend;

impl CodegenBackend for RefSimBackend {
    fn target(&self) -> &str {
        REFSIM
    }

    fn format(&self) -> PayloadFormat {
        PayloadFormat::JsonGraph
    }

    fn compile(&self, f: &RegionFunction) -> Result<Vec<u8>> {
        check_ops(f, REFSIM, REFSIM_OPS)?;
        codegen_json(f)
    }
}

pub struct RefSimEngine {
    function: RegionFunction,
}

impl RefSimEngine {
    pub fn function(&self) -> &RegionFunction {
        &self.function
    }
}

impl AccelEngine for RefSimEngine {
    fn run(&self, inputs: &[Tensor]) -> Result<EngineOutput> {
        let start = Instant::now();
        let outputs = run_function(&self.function, &Functions::new(), inputs)?;
        Ok(EngineOutput {
            outputs,
            exec_ns: start.elapsed().as_nanos() as u64,
        })
    }
}

pub struct RefSimFactory;

impl EngineFactory for RefSimFactory {
    fn target(&self) -> &str {
        REFSIM
    }

    fn create(&self, sub: &AccelSubModule, constants: &[ConstantTensor]) -> Result<Box<dyn AccelEngine>> {
        check_format(sub, PayloadFormat::JsonGraph)?;
        let function = decode_json(&sub.payload, constants)?;
        check_ops(&function, REFSIM, REFSIM_OPS)?;
        Ok(Box::new(RefSimEngine { function }))
    }
}
