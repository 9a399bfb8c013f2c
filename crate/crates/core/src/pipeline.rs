//! The fixed compilation pipeline from model graph to compiled blob.

use serde::Serialize;

use crate::accel::{calibrate, collect_region_samples, insert_layout_transforms, insert_quant_nodes};
use crate::codegen::{compile_module, Backends, CompiledModule};
use crate::error::{Error, Result};
use crate::interp::Inputs;
use crate::ir::{infer_module, validate, Graph, Layout, Module};
use crate::partition::{offload_ratio, partition, OffloadRatio, PartitionConfig, Region, TargetRegistry};
use crate::passes::{common_subexpr_elim, constant_fold, count_graph_macs, dead_code_elim};
use crate::patterns::{group_patterns, PatternTable};

#[derive(Clone, Debug, Default)]
pub struct CompileOptions {
    pub registry: TargetRegistry,
    pub partition: PartitionConfig,
    pub patterns: PatternTable,
    /// Quantize functions whose backend needs it.
    pub quantize: bool,
    /// Model-level samples for static calibration; dynamic ranges without.
    pub calibration: Vec<Inputs>,
    pub layout: Option<Layout>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSummary {
    pub function: String,
    pub target: String,
    pub format: String,
    /// Operators as the partitioner counts them: a composite is one.
    pub nodes: usize,
    pub primitive_nodes: usize,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompileSummary {
    pub formed_regions: usize,
    pub split_regions: usize,
    pub regions: Vec<RegionSummary>,
    pub offload: OffloadRatio,
}

#[derive(Clone, Debug)]
pub struct CompileOutput {
    pub compiled: CompiledModule,
    /// Encapsulated module before accelerator passes.
    pub partitioned: Module,
    /// Module after accelerator passes, as handed to codegen.
    pub lowered: Module,
    pub formed: Vec<Region>,
    pub split: Vec<Region>,
    pub regions: Vec<Region>,
    pub summary: CompileSummary,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        cause: Box::new(e),
    })
}

/// Target-independent optimization: validate, infer, fold, CSE, DCE.
pub fn optimize(graph: &Graph) -> Result<Graph> {
    stage(
        "validate",
        validate(&Module::new(graph.clone()))
            .map_err(|d| Error::Invalid(d.iter().map(|d| d.to_string()).collect())),
    )?;
    let g = stage("infer_types", infer_module(&Module::new(graph.clone())))?.main;
    let g = stage("constant_fold", constant_fold(&g))?;
    let g = stage("cse", common_subexpr_elim(&g))?;
    Ok(dead_code_elim(&g))
}

/// Layout and quantization rewrites of every target function.
pub fn accel_passes(module: &Module, opts: &CompileOptions, backends: &Backends) -> Result<Module> {
    let mut out = module.clone();
    if let Some(layout) = opts.layout {
        for f in out.functions.values_mut().filter(|f| f.target().is_some()) {
            *f = insert_layout_transforms(f, layout)?;
        }
        out = infer_module(&out)?;
    }
    let needs_quant: Vec<String> = out
        .target_functions()
        .filter(|f| backends.get(f.target().unwrap()).is_ok_and(|b| b.requires_quantization()))
        .map(|f| f.name.clone())
        .collect();
    if needs_quant.is_empty() {
        return Ok(out);
    }
    if !opts.quantize {
        return Err(Error::Codegen(format!(
            "target of `{}` computes in fixed point; compile with quantization enabled",
            needs_quant[0]
        )));
    }
    let samples = if opts.calibration.is_empty() {
        None
    } else {
        Some(collect_region_samples(&out, &opts.calibration)?)
    };
    let source = out.clone();
    for name in needs_quant {
        let f = &source.functions[&name];
        let params = match &samples {
            Some(s) => {
                let set = s
                    .get(&name)
                    .ok_or_else(|| Error::Quant(format!("no calibration samples reached `{name}`")))?;
                Some(calibrate(f, &source.functions, set)?)
            }
            None => None,
        };
        out.functions.insert(name, insert_quant_nodes(f, params.as_ref())?);
    }
    infer_module(&out)
}

/// Inlined composite members carry the id of the call they replaced.
fn partition_size(f: &crate::ir::RegionFunction) -> usize {
    let mut composites = std::collections::BTreeSet::new();
    f.body
        .nodes
        .iter()
        .filter(|n| match n.attr("composite").and_then(|a| a.as_text()) {
            Some(c) => composites.insert(c),
            None => true,
        })
        .count()
}

/// optimize → group_patterns → partition → accelerator passes → codegen.
pub fn compile(graph: &Graph, opts: &CompileOptions, backends: &Backends) -> Result<CompileOutput> {
    let g = optimize(graph)?;
    let grouped = stage("group_patterns", group_patterns(&Module::new(g), &opts.patterns))?;
    let parts = stage("partition", partition(&grouped, &opts.registry, &opts.partition))?;
    let offload = stage("offload_ratio", offload_ratio(&parts.module))?;
    let lowered = stage("accel_passes", accel_passes(&parts.module, opts, backends))?;
    let compiled = stage("codegen", compile_module(&lowered, backends))?;

    let mut regions = Vec::new();
    for f in parts.module.target_functions() {
        let target = f.target().unwrap().to_string();
        regions.push(RegionSummary {
            function: f.name.clone(),
            format: compiled
                .accel(&f.name)
                .map(|a| a.format.to_string())
                .unwrap_or_default(),
            target,
            nodes: partition_size(f),
            primitive_nodes: f.body.nodes.len(),
            macs: stage("count_macs", count_graph_macs(&f.body))?,
        });
    }
    let summary = CompileSummary {
        formed_regions: parts.formed.len(),
        split_regions: parts.split.len(),
        regions,
        offload,
    };
    Ok(CompileOutput {
        compiled,
        partitioned: parts.module,
        lowered,
        formed: parts.formed,
        split: parts.split,
        regions: parts.regions,
        summary,
    })
}
