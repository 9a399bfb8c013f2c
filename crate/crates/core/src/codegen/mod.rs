//! Compilation of an encapsulated module into a heterogeneous blob: a host
//! instruction plan, one payload per region function and a metadata
//! section owning constants and the data-entry plan.

mod blob;
mod csource;
mod host;
mod json_graph;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ir::{infer_module, Attrs, ConstantTensor, Module, RegionFunction, Tensor, TensorType};

pub use blob::{from_bytes, load_module, save_module, to_bytes, BLOB_MAGIC, BLOB_VERSION};
pub use csource::{
    codegen_c_source, decode_c_payload, CCall, CPayload, CallPlan, PlanTensor, KERNEL_LIBRARY_OPS,
};
pub use host::codegen_host;
pub use json_graph::{codegen_json, decode_json};

/// Owner tag of constants read by the host plan.
pub const HOST_OWNER: &str = "host";

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    /// A host operator reading and writing data entries.
    Op {
        op: String,
        attrs: Attrs,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
    },
    /// Hook into an accelerator sub-module.
    ExternCall {
        fn_name: String,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
    },
}

impl Instr {
    pub fn inputs(&self) -> &[usize] {
        match self {
            Instr::Op { inputs, .. } | Instr::ExternCall { inputs, .. } => inputs,
        }
    }

    pub fn outputs(&self) -> &[usize] {
        match self {
            Instr::Op { outputs, .. } | Instr::ExternCall { outputs, .. } => outputs,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HostSubModule {
    pub plan: Vec<Instr>,
    /// Entry ids holding the model outputs.
    pub outputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntrySource {
    Input(String),
    Constant(String),
    Intermediate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryInfo {
    pub id: usize,
    pub ttype: TensorType,
    pub source: EntrySource,
}

/// A constant and the sub-modules (`host` or function names) reading it.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaConstant {
    pub name: String,
    pub owners: Vec<String>,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetadataBlob {
    pub constants: Vec<MetaConstant>,
    pub entries: Vec<EntryInfo>,
}

impl MetadataBlob {
    /// Add `value` as `name` for `owner`, sharing storage with an existing
    /// bitwise-equal constant of the same name.
    pub fn add_constant(&mut self, owner: &str, name: &str, value: &Tensor) {
        if let Some(c) = self
            .constants
            .iter_mut()
            .find(|c| c.name == name && c.value.bitwise_eq(value))
        {
            if !c.owners.iter().any(|o| o == owner) {
                c.owners.push(owner.to_string());
            }
            return;
        }
        self.constants.push(MetaConstant {
            name: name.to_string(),
            owners: vec![owner.to_string()],
            value: value.clone(),
        });
    }

    /// Constants visible to one owner.
    pub fn constants_for(&self, owner: &str) -> Vec<ConstantTensor> {
        self.constants
            .iter()
            .filter(|c| c.owners.iter().any(|o| o == owner))
            .map(|c| ConstantTensor::new(c.name.clone(), c.value.clone()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadFormat {
    JsonGraph,
    CSource,
    CustomBitstream,
}

impl PayloadFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadFormat::JsonGraph => "json_graph",
            PayloadFormat::CSource => "c_source",
            PayloadFormat::CustomBitstream => "custom_bitstream",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => PayloadFormat::JsonGraph,
            1 => PayloadFormat::CSource,
            2 => PayloadFormat::CustomBitstream,
            _ => return Err(Error::Decode(format!("unknown payload format tag {t}"))),
        })
    }
}

impl fmt::Display for PayloadFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PayloadFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json_graph" => Ok(PayloadFormat::JsonGraph),
            "c_source" => Ok(PayloadFormat::CSource),
            "custom_bitstream" => Ok(PayloadFormat::CustomBitstream),
            _ => Err(Error::Config(format!("unknown payload format `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccelSubModule {
    pub fn_name: String,
    pub target: String,
    pub format: PayloadFormat,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledModule {
    pub version: u32,
    pub host: HostSubModule,
    /// Sorted by function name.
    pub accels: Vec<AccelSubModule>,
    pub metadata: MetadataBlob,
}

impl CompiledModule {
    pub fn accel(&self, fn_name: &str) -> Option<&AccelSubModule> {
        self.accels.iter().find(|a| a.fn_name == fn_name)
    }

    /// Graph inputs in entry order.
    pub fn inputs(&self) -> Vec<(&str, &TensorType)> {
        self.metadata
            .entries
            .iter()
            .filter_map(|e| match &e.source {
                EntrySource::Input(n) => Some((n.as_str(), &e.ttype)),
                _ => None,
            })
            .collect()
    }
}

/// Per-target compiler from region function to payload bytes.
pub trait CodegenBackend: Send + Sync {
    fn target(&self) -> &str;
    fn format(&self) -> PayloadFormat;
    fn compile(&self, f: &RegionFunction) -> Result<Vec<u8>>;
    /// Whether the payload carries the function's constants itself, in
    /// which case they are not repeated in the metadata section.
    fn embeds_constants(&self) -> bool {
        false
    }
    /// Whether functions must go through the quantization pass first.
    fn requires_quantization(&self) -> bool {
        false
    }
}

/// Backends keyed by target name.
#[derive(Default)]
pub struct Backends {
    map: BTreeMap<String, Box<dyn CodegenBackend>>,
}

impl Backends {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, backend: Box<dyn CodegenBackend>) {
        self.map.insert(backend.target().to_string(), backend);
    }

    pub fn get(&self, target: &str) -> Result<&dyn CodegenBackend> {
        self.map
            .get(target)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::NoBackend(target.to_string()))
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Payload of `f` produced by the backend registered for its target.
pub fn serialize_custom(f: &RegionFunction, backends: &Backends) -> Result<Vec<u8>> {
    let target = f
        .target()
        .ok_or_else(|| Error::Codegen(format!("`{}` has no target", f.name)))?;
    backends.get(target)?.compile(f)
}

/// Host plan, metadata and one payload per target function.
pub fn compile_module(module: &Module, backends: &Backends) -> Result<CompiledModule> {
    let module = infer_module(module)?;
    let (host, mut metadata) = codegen_host(&module)?;
    let mut accels = Vec::new();
    for f in module.target_functions() {
        let target = f.target().unwrap();
        let backend = backends.get(target)?;
        let payload = backend.compile(f)?;
        if !backend.embeds_constants() {
            for c in &f.body.constants {
                metadata.add_constant(&f.name, &c.name, &c.value);
            }
        }
        accels.push(AccelSubModule {
            fn_name: f.name.clone(),
            target: target.to_string(),
            format: backend.format(),
            payload,
        });
    }
    accels.sort_by(|a, b| a.fn_name.cmp(&b.fn_name));
    Ok(CompiledModule {
        version: BLOB_VERSION,
        host,
        accels,
        metadata,
    })
}
