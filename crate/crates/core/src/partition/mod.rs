//! Target annotation, region formation, cost-based splitting, fallback and
//! encapsulation of regions into target-labeled functions.

mod annotate;
mod encapsulate;
mod regions;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ir::{infer_module, Attrs, DataType, Module, TensorType};

pub use annotate::{annotate, Assignment};
pub use encapsulate::{encapsulate, inline_composites, offload_ratio, OffloadRatio};
pub use regions::{apply_fallback, calc_mac_fallback, contracted_is_acyclic, cost_split, form_regions};

/// Target name given to nodes no accelerator accepts.
pub const HOST: &str = "host";

pub type PredicateFn = dyn Fn(&Attrs, &[TensorType]) -> bool + Send + Sync;

#[derive(Clone)]
pub enum Predicate {
    Always,
    /// Every input has this dtype.
    Dtype(DataType),
    Custom(Arc<PredicateFn>),
}

impl Predicate {
    pub fn accepts(&self, attrs: &Attrs, inputs: &[TensorType]) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Dtype(d) => inputs.iter().all(|t| t.dtype == *d),
            Predicate::Custom(f) => f(attrs, inputs),
        }
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Always => f.write_str("Always"),
            Predicate::Dtype(d) => write!(f, "Dtype({d})"),
            Predicate::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Accepts nodes whose operator (or composite pattern name) is `op`.
#[derive(Clone, Debug)]
pub struct AnnotationRule {
    pub target: String,
    pub op: String,
    pub predicate: Predicate,
}

impl AnnotationRule {
    pub fn new(target: &str, op: &str, predicate: Predicate) -> Self {
        AnnotationRule {
            target: target.to_string(),
            op: op.to_string(),
            predicate,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TargetRegistry {
    /// Highest priority first.
    targets: Vec<String>,
    rules: Vec<AnnotationRule>,
}

impl TargetRegistry {
    pub fn new(targets: Vec<String>, rules: Vec<AnnotationRule>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &targets {
            if t == HOST {
                return Err(Error::Config(format!("`{HOST}` is reserved")));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Config(format!("target `{t}` listed twice")));
            }
        }
        if let Some(r) = rules.iter().find(|r| !seen.contains(r.target.as_str())) {
            return Err(Error::UnknownTarget(r.target.clone()));
        }
        Ok(TargetRegistry { targets, rules })
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn rules(&self) -> &[AnnotationRule] {
        &self.rules
    }

    /// Highest-priority target accepting `op`, if any.
    pub fn choose(&self, op: &str, attrs: &Attrs, inputs: &[TensorType]) -> Option<&str> {
        self.targets
            .iter()
            .find(|t| {
                self.rules
                    .iter()
                    .any(|r| &r.target == *t && r.op == op && r.predicate.accepts(attrs, inputs))
            })
            .map(String::as_str)
    }
}

/// Criterion dropping regions back to the host after splitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fallback {
    #[default]
    CalcMacGtZero,
    /// Keep regions with at least this many primitive operators.
    MinNodes(usize),
    None,
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calc_mac_gt_zero" => Ok(Fallback::CalcMacGtZero),
            "none" => Ok(Fallback::None),
            _ => s
                .strip_prefix("min_nodes:")
                .and_then(|k| k.parse().ok())
                .map(Fallback::MinNodes)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown fallback `{s}` (expected calc_mac_gt_zero, none or min_nodes:<k>)"
                    ))
                }),
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fallback::CalcMacGtZero => f.write_str("calc_mac_gt_zero"),
            Fallback::MinNodes(k) => write!(f, "min_nodes:{k}"),
            Fallback::None => f.write_str("none"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionConfig {
    pub max_nodes: Option<usize>,
    pub fallback: Fallback,
}

/// Connected same-target node set of the main graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub id: usize,
    pub target: String,
    pub nodes: BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpRuleJson {
    op: String,
    #[serde(default)]
    require_dtype: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetJson {
    name: String,
    #[serde(default)]
    priority: i64,
    #[serde(default)]
    supported_ops: Vec<OpRuleJson>,
    #[serde(default)]
    supported_patterns: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionJson {
    #[serde(default)]
    max_nodes: Option<usize>,
    #[serde(default)]
    fallback: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetConfigJson {
    targets: Vec<TargetJson>,
    #[serde(default)]
    partition: Option<PartitionJson>,
}

/// Parse a target configuration. Targets are ranked by descending
/// `priority`, ties broken by name.
pub fn parse_target_config(text: &str) -> Result<(TargetRegistry, PartitionConfig)> {
    let cfg: TargetConfigJson =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut ranked: Vec<&TargetJson> = cfg.targets.iter().collect();
    ranked.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.name.cmp(&b.name)));
    let mut rules = Vec::new();
    for t in &ranked {
        for r in &t.supported_ops {
            let predicate = match &r.require_dtype {
                None => Predicate::Always,
                Some(d) => Predicate::Dtype(d.parse()?),
            };
            rules.push(AnnotationRule::new(&t.name, &r.op, predicate));
        }
        for p in &t.supported_patterns {
            rules.push(AnnotationRule::new(&t.name, p, Predicate::Always));
        }
    }
    let registry = TargetRegistry::new(ranked.iter().map(|t| t.name.clone()).collect(), rules)?;
    let mut config = PartitionConfig::default();
    if let Some(p) = cfg.partition {
        if p.max_nodes == Some(0) {
            return Err(Error::Config("max_nodes must be at least 1".into()));
        }
        config.max_nodes = p.max_nodes;
        if let Some(f) = p.fallback {
            config.fallback = f.parse()?;
        }
    }
    Ok((registry, config))
}

/// Region lists at each stage plus the encapsulated module.
#[derive(Clone, Debug)]
pub struct Partitioned {
    pub module: Module,
    pub formed: Vec<Region>,
    pub split: Vec<Region>,
    pub regions: Vec<Region>,
}

/// annotate → form_regions → cost_split → fallback → encapsulate.
pub fn partition(module: &Module, registry: &TargetRegistry, config: &PartitionConfig) -> Result<Partitioned> {
    let module = infer_module(module)?;
    let assignment = annotate(&module, registry)?;
    let formed = form_regions(&module, &assignment)?;
    let split = cost_split(&module.main, &formed, config.max_nodes)?;
    let regions = apply_fallback(&module, &split, config.fallback)?;
    let module = encapsulate(&module, &regions)?;
    Ok(Partitioned {
        module,
        formed,
        split,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_ranks_by_priority() {
        let text = r#"{"targets":[
            {"name":"b","priority":1,"supported_ops":[{"op":"relu"}]},
            {"name":"a","priority":5,"supported_ops":[{"op":"relu","require_dtype":"f32"}]}],
            "partition":{"max_nodes":3,"fallback":"none"}}"#;
        let (reg, cfg) = parse_target_config(text).unwrap();
        assert_eq!(reg.targets(), ["a", "b"]);
        assert_eq!(cfg.max_nodes, Some(3));
        assert_eq!(cfg.fallback, Fallback::None);
        let f32_in = [TensorType::f32([2])];
        assert_eq!(reg.choose("relu", &Attrs::new(), &f32_in), Some("a"));
        let i8_in = [TensorType::new(vec![2], DataType::I8)];
        assert_eq!(reg.choose("relu", &Attrs::new(), &i8_in), Some("b"));
    }

    #[test]
    fn unknown_rule_target_rejected() {
        let r = TargetRegistry::new(vec!["a".into()], vec![AnnotationRule::new("z", "relu", Predicate::Always)]);
        assert!(matches!(r, Err(Error::UnknownTarget(t)) if t == "z"));
    }

    #[test]
    fn fallback_names() {
        for s in ["calc_mac_gt_zero", "none", "min_nodes:3"] {
            assert_eq!(s.parse::<Fallback>().unwrap().to_string(), s);
        }
        assert!("sometimes".parse::<Fallback>().is_err());
    }
}
