use std::collections::BTreeMap;
use std::sync::Arc;

use crate::codegen::AccelSubModule;
use crate::error::{Error, Result};
use crate::ir::{ConstantTensor, Tensor};

/// Result of one engine invocation. `exec_ns` is the engine's own
/// measurement of kernel execution time.
#[derive(Clone, Debug)]
pub struct EngineOutput {
    pub outputs: Vec<Tensor>,
    pub exec_ns: u64,
}

/// An initialized accelerator execution engine.
pub trait AccelEngine: Send + Sync {
    fn run(&self, inputs: &[Tensor]) -> Result<EngineOutput>;
}

/// Builds engines for one target from a sub-module payload and the
/// constants the metadata section assigns to it.
pub trait EngineFactory: Send + Sync {
    fn target(&self) -> &str;
    fn create(&self, sub: &AccelSubModule, constants: &[ConstantTensor]) -> Result<Box<dyn AccelEngine>>;
}

#[derive(Clone, Default)]
pub struct EngineRegistry {
    map: BTreeMap<String, Arc<dyn EngineFactory>>,
}

impl EngineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, factory: Arc<dyn EngineFactory>) {
        self.map.insert(factory.target().to_string(), factory);
    }

    pub fn get(&self, target: &str) -> Result<&Arc<dyn EngineFactory>> {
        self.map
            .get(target)
            .ok_or_else(|| Error::NoEngine(target.to_string()))
    }

    pub fn contains(&self, target: &str) -> bool {
        self.map.contains_key(target)
    }
}
