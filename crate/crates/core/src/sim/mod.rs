//! Built-in simulated accelerators: `refsim` (fp32, JSON graph payload),
//! `clib` (fp32, C source payload) and `fixsim` (int8 fixed point, custom
//! bitstream).

mod clib;
mod fixsim;
mod refsim;

use std::sync::Arc;
use std::time::Duration;

pub use clib::{ClibBackend, ClibEngine, ClibFactory, CLIB};
pub use fixsim::{
    FixSimBackend, FixSimEngine, FixSimFactory, FxsBitstream, FxsKind, FxsOp, Operand, FIXSIM,
    FIXSIM_INTERIOR_OPS, FXS_MAGIC, FXS_VERSION,
};
pub use refsim::{RefSimBackend, RefSimEngine, RefSimFactory, REFSIM, REFSIM_OPS};

use crate::codegen::Backends;
use crate::runtime::EngineRegistry;

pub fn builtin_backends() -> Backends {
    let mut b = Backends::new();
    b.register(Box::new(RefSimBackend));
    b.register(Box::new(ClibBackend));
    b.register(Box::new(FixSimBackend));
    b
}

/// Engine factories for the built-in targets; `fixsim_init_delay` is slept
/// once per fixsim engine creation.
pub fn builtin_engines(fixsim_init_delay: Duration) -> EngineRegistry {
    let mut r = EngineRegistry::new();
    r.register(Arc::new(RefSimFactory));
    r.register(Arc::new(ClibFactory));
    r.register(Arc::new(FixSimFactory {
        init_delay: fixsim_init_delay,
    }));
    r
}
