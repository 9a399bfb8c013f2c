//! Engine executing the call plan of a C source payload with the built-in
//! kernel library.

use std::collections::HashMap;
use std::time::Instant;

use super::refsim::check_format;
use crate::codegen::{
    codegen_c_source, decode_c_payload, AccelSubModule, CallPlan, CodegenBackend, PayloadFormat,
};
use crate::error::{Error, Result};
use crate::ir::{ConstantTensor, RegionFunction, Tensor};
use crate::kernels;
use crate::runtime::{AccelEngine, EngineFactory, EngineOutput};

pub const CLIB: &str = "clib";

pub struct ClibBackend;

impl CodegenBackend for ClibBackend {
    fn target(&self) -> &str {
        CLIB
    }

    fn format(&self) -> PayloadFormat {
        PayloadFormat::CSource
    }

    fn compile(&self, f: &RegionFunction) -> Result<Vec<u8>> {
        codegen_c_source(f)
    }
}

pub struct ClibEngine {
    plan: CallPlan,
    constants: Vec<Tensor>,
}

impl ClibEngine {
    pub fn plan(&self) -> &CallPlan {
        &self.plan
    }
}

impl AccelEngine for ClibEngine {
    fn run(&self, inputs: &[Tensor]) -> Result<EngineOutput> {
        let start = Instant::now();
        let plan = &self.plan;
        if inputs.len() != plan.params.len() {
            return Err(Error::Runtime(format!(
                "`{}` takes {} arguments, got {}",
                plan.function,
                plan.params.len(),
                inputs.len()
            )));
        }
        let mut buffers: HashMap<&str, Tensor> = HashMap::with_capacity(plan.calls.len() + inputs.len());
        for (p, t) in plan.params.iter().zip(inputs) {
            if t.ttype() != p.ttype {
                return Err(Error::Runtime(format!(
                    "`{}` argument `{}` has type {}, expected {}",
                    plan.function,
                    p.name,
                    t.ttype(),
                    p.ttype
                )));
            }
            buffers.insert(&p.name, t.clone());
        }
        for (p, t) in plan.constants.iter().zip(&self.constants) {
            buffers.insert(&p.name, t.clone());
        }
        for call in &plan.calls {
            let args: Vec<&Tensor> = call
                .args
                .iter()
                .map(|a| {
                    buffers
                        .get(a.as_str())
                        .ok_or_else(|| Error::Runtime(format!("buffer `{a}` not written")))
                })
                .collect::<Result<_>>()?;
            let out = kernels::eval(&call.op, &call.attrs, &args)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::kernel(&call.op, "no output"))?;
            buffers.insert(&call.out, out);
        }
        let outputs = plan
            .results
            .iter()
            .map(|r| {
                buffers
                    .get(r.as_str())
                    .cloned()
                    .ok_or_else(|| Error::Runtime(format!("result buffer `{r}` not written")))
            })
            .collect::<Result<_>>()?;
        Ok(EngineOutput {
            outputs,
            exec_ns: start.elapsed().as_nanos() as u64,
        })
    }
}

pub struct ClibFactory;

impl EngineFactory for ClibFactory {
    fn target(&self) -> &str {
        CLIB
    }

    fn create(&self, sub: &AccelSubModule, constants: &[ConstantTensor]) -> Result<Box<dyn AccelEngine>> {
        check_format(sub, PayloadFormat::CSource)?;
        let plan = decode_c_payload(&sub.payload)?.plan;
        let constants = plan
            .constants
            .iter()
            .map(|p| {
                let c = constants
                    .iter()
                    .find(|c| c.name == p.name)
                    .ok_or_else(|| Error::Decode(format!("constant `{}` not supplied", p.name)))?;
                if c.ttype() != p.ttype {
                    return Err(Error::Decode(format!("constant `{}` has the wrong type", p.name)));
                }
                Ok(c.value.clone())
            })
            .collect::<Result<_>>()?;
        Ok(Box::new(ClibEngine { plan, constants }))
    }
}
