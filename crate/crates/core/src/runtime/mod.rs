//! Execution of compiled modules: data entries, the host plan executor,
//! external-call dispatch to cached accelerator engines and profiling.

mod engine;
mod profile;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub use engine::{AccelEngine, EngineFactory, EngineOutput, EngineRegistry};
pub use profile::{Breakdown, KernelProfile, ProfileReport};

use crate::codegen::{CompiledModule, EntrySource, Instr, HOST_OWNER};
use crate::error::{Error, Result};
use crate::interp::Inputs;
use crate::ir::Tensor;
use crate::kernels;
use profile::Profiler;

#[derive(Clone, Debug, Default)]
pub struct SessionOptions {
    /// Initialize every engine at load instead of at first dispatch.
    pub eager_init: bool,
    /// Clear all non-constant entries before each run so stale buffers
    /// cannot hide a plan that reads an entry before writing it.
    pub poison_entries: bool,
    /// Simulated transfer cost per byte moved to or from an engine.
    pub transfer_ns_per_byte: u64,
}

/// Initialized engines keyed by function name.
#[derive(Default)]
pub struct EngineCache {
    engines: Mutex<BTreeMap<String, Arc<dyn AccelEngine>>>,
    init_count: AtomicUsize,
}

impl EngineCache {
    /// Number of engines ever initialized.
    pub fn init_count(&self) -> usize {
        self.init_count.load(Ordering::SeqCst)
    }

    /// Cached engine for `fn_name`, or a new one from `init` together with
    /// its construction time. The lock is held across `init` so concurrent
    /// callers cannot initialize twice.
    pub fn get_or_init(
        &self,
        fn_name: &str,
        init: impl FnOnce() -> Result<Box<dyn AccelEngine>>,
    ) -> Result<(Arc<dyn AccelEngine>, Option<u64>)> {
        let mut map = self.engines.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(e) = map.get(fn_name) {
            return Ok((e.clone(), None));
        }
        let start = Instant::now();
        let engine: Arc<dyn AccelEngine> = Arc::from(init()?);
        let ns = (start.elapsed().as_nanos() as u64).max(1);
        map.insert(fn_name.to_string(), engine.clone());
        self.init_count.fetch_add(1, Ordering::SeqCst);
        Ok((engine, Some(ns)))
    }
}

fn simulate_transfer(bytes: usize, ns_per_byte: u64) {
    if ns_per_byte == 0 {
        return;
    }
    let until = Duration::from_nanos(bytes as u64 * ns_per_byte);
    let start = Instant::now();
    while start.elapsed() < until {
        std::hint::spin_loop();
    }
}

pub struct InferenceSession {
    module: CompiledModule,
    registry: EngineRegistry,
    options: SessionOptions,
    entries: Vec<Option<Tensor>>,
    cache: EngineCache,
    profiler: Profiler,
}

impl InferenceSession {
    /// Allocate the entry table and load host constants into their entries.
    /// Engines are created lazily unless `eager_init` is set.
    pub fn load(module: CompiledModule, registry: &EngineRegistry, options: SessionOptions) -> Result<Self> {
        for a in &module.accels {
            registry.get(&a.target)?;
        }
        let meta = &module.metadata;
        let mut entries: Vec<Option<Tensor>> = vec![None; meta.entries.len()];
        for (i, e) in meta.entries.iter().enumerate() {
            if e.id != i {
                return Err(Error::Runtime(format!("entry plan is not dense at id {i}")));
            }
            if let EntrySource::Constant(name) = &e.source {
                let c = meta
                    .constants
                    .iter()
                    .find(|c| &c.name == name && c.owners.iter().any(|o| o == HOST_OWNER))
                    .ok_or_else(|| Error::Runtime(format!("constant `{name}` missing from metadata")))?;
                if c.value.ttype() != e.ttype {
                    return Err(Error::Runtime(format!(
                        "constant `{name}` has type {}, entry {i} expects {}",
                        c.value.ttype(),
                        e.ttype
                    )));
                }
                entries[i] = Some(c.value.clone());
            }
        }
        let n_instr = module.host.plan.len();
        let mut s = InferenceSession {
            module,
            registry: registry.clone(),
            options,
            entries,
            cache: EngineCache::default(),
            profiler: Profiler {
                host_ns: vec![0; n_instr],
                ..Profiler::default()
            },
        };
        if s.options.eager_init {
            let names: Vec<String> = s.module.accels.iter().map(|a| a.fn_name.clone()).collect();
            for n in names {
                s.engine(&n)?;
            }
        }
        Ok(s)
    }

    pub fn module(&self) -> &CompiledModule {
        &self.module
    }

    pub fn init_count(&self) -> usize {
        self.cache.init_count()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// Current content of an entry.
    pub fn entry(&self, id: usize) -> Option<&Tensor> {
        self.entries.get(id).and_then(Option::as_ref)
    }

    fn engine(&mut self, fn_name: &str) -> Result<Arc<dyn AccelEngine>> {
        let sub = self
            .module
            .accel(fn_name)
            .ok_or_else(|| Error::Runtime(format!("no sub-module `{fn_name}`")))?;
        let factory = self.registry.get(&sub.target)?.clone();
        let constants = self.module.metadata.constants_for(fn_name);
        let (engine, init_ns) = self
            .cache
            .get_or_init(fn_name, || factory.create(sub, &constants))
            .map_err(|e| Error::Engine {
                fn_name: fn_name.to_string(),
                cause: Box::new(e),
            })?;
        if let Some(ns) = init_ns {
            self.profiler.kernel_mut(fn_name).engine_init_ns += ns;
        }
        Ok(engine)
    }

    fn read(&self, id: usize) -> Result<&Tensor> {
        self.entries
            .get(id)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Runtime(format!("entry {id} read before it was written")))
    }

    fn write(&mut self, id: usize, t: Tensor) -> Result<()> {
        let want = &self.module.metadata.entries[id].ttype;
        if &t.ttype() != want {
            return Err(Error::Runtime(format!(
                "entry {id} expects {want}, got {}",
                t.ttype()
            )));
        }
        self.entries[id] = Some(t);
        Ok(())
    }

    fn check_inputs(&self, inputs: &Inputs) -> Result<Vec<(usize, Tensor)>> {
        let expected = || {
            self.module
                .inputs()
                .iter()
                .map(|(n, t)| format!("{n}: {t}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = Vec::new();
        for e in &self.module.metadata.entries {
            if let EntrySource::Input(name) = &e.source {
                let t = inputs.get(name).ok_or_else(|| {
                    Error::Input(format!("missing input `{name}`; expected inputs: {}", expected()))
                })?;
                if t.ttype() != e.ttype {
                    return Err(Error::Input(format!(
                        "input `{name}` has type {}, expected {}",
                        t.ttype(),
                        e.ttype
                    )));
                }
                out.push((e.id, t.clone()));
            }
        }
        Ok(out)
    }

    /// Execute the host plan on `inputs`.
    pub fn run(&mut self, inputs: &Inputs) -> Result<Vec<Tensor>> {
        let bound = self.check_inputs(inputs)?;
        if self.options.poison_entries {
            for (e, info) in self.entries.iter_mut().zip(&self.module.metadata.entries) {
                if !matches!(info.source, EntrySource::Constant(_)) {
                    *e = None;
                }
            }
        }
        for (id, t) in bound {
            self.entries[id] = Some(t);
        }
        for k in 0..self.module.host.plan.len() {
            let start = Instant::now();
            match self.module.host.plan[k].clone() {
                Instr::Op {
                    op,
                    attrs,
                    inputs,
                    outputs,
                } => {
                    let args: Vec<&Tensor> = inputs.iter().map(|&i| self.read(i)).collect::<Result<_>>()?;
                    let outs = kernels::eval(&op, &attrs, &args)?;
                    if outs.len() != outputs.len() {
                        return Err(Error::Runtime(format!("`{op}` produced {} outputs", outs.len())));
                    }
                    for (id, t) in outputs.into_iter().zip(outs) {
                        self.write(id, t)?;
                    }
                    self.profiler.host_ns[k] += start.elapsed().as_nanos() as u64;
                }
                Instr::ExternCall {
                    fn_name,
                    inputs,
                    outputs,
                } => self.dispatch_external(&fn_name, &inputs, &outputs)?,
            }
        }
        self.profiler.runs += 1;
        self.module
            .host
            .outputs
            .clone()
            .into_iter()
            .map(|id| self.read(id).cloned())
            .collect()
    }

    /// Run the engine of `fn_name` on the given entries and write its
    /// results back, recording transfer, invocation and execution time.
    pub fn dispatch_external(&mut self, fn_name: &str, inputs: &[usize], outputs: &[usize]) -> Result<()> {
        let engine = self.engine(fn_name)?;
        let wrap = |e: Error| Error::Engine {
            fn_name: fn_name.to_string(),
            cause: Box::new(e),
        };

        let t0 = Instant::now();
        let args: Vec<Tensor> = inputs.iter().map(|&i| self.read(i).cloned()).collect::<Result<_>>()?;
        simulate_transfer(args.iter().map(|t| t.ttype().byte_size()).sum(), self.options.transfer_ns_per_byte);
        let transfer_in = t0.elapsed().as_nanos() as u64;

        let t1 = Instant::now();
        let out = engine.run(&args).map_err(wrap)?;
        let call_ns = t1.elapsed().as_nanos() as u64;
        let execution = out.exec_ns.min(call_ns);

        let t2 = Instant::now();
        if out.outputs.len() != outputs.len() {
            return Err(wrap(Error::Runtime(format!(
                "engine returned {} outputs, expected {}",
                out.outputs.len(),
                outputs.len()
            ))));
        }
        let bytes: usize = out.outputs.iter().map(|t| t.ttype().byte_size()).sum();
        for (&id, t) in outputs.iter().zip(out.outputs) {
            self.write(id, t).map_err(wrap)?;
        }
        simulate_transfer(bytes, self.options.transfer_ns_per_byte);
        let transfer_out = t2.elapsed().as_nanos() as u64;

        let k = self.profiler.kernel_mut(fn_name);
        k.transfer_ns += transfer_in + transfer_out;
        k.invocation_ns += call_ns - execution;
        k.execution_ns += execution;
        Ok(())
    }

    /// Timing breakdown over all runs so far.
    pub fn profile_report(&self) -> Result<ProfileReport> {
        self.profiler.report()
    }
}
