//! Reference interpreter: executes a graph with the host kernels, inlining
//! calls to region functions.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::ir::{topo_order, Functions, Graph, GraphNode, Module, NodeRef, RegionFunction, Source, Tensor, CALL_OP};
use crate::kernels;

pub type Inputs = BTreeMap<String, Tensor>;

/// Check that `inputs` supplies every graph input with the declared type.
pub fn check_inputs(graph: &Graph, inputs: &Inputs) -> Result<()> {
    for decl in &graph.inputs {
        let t = inputs.get(&decl.name).ok_or_else(|| {
            let expected: Vec<String> = graph
                .inputs
                .iter()
                .map(|i| format!("{}: {}", i.name, i.ttype))
                .collect();
            Error::Input(format!(
                "missing input `{}`; expected inputs: {}",
                decl.name,
                expected.join(", ")
            ))
        })?;
        if t.ttype() != decl.ttype {
            return Err(Error::Input(format!(
                "input `{}` has type {}, expected {}",
                decl.name,
                t.ttype(),
                decl.ttype
            )));
        }
    }
    Ok(())
}

pub fn run_graph(graph: &Graph, functions: &Functions, inputs: &Inputs) -> Result<Vec<Tensor>> {
    run_graph_observed(graph, functions, inputs, &mut |_, _, _| {})
}

/// Called with each top-level node, its arguments and its results.
pub type Observer<'o> = dyn FnMut(&GraphNode, &[&Tensor], &[Tensor]) + 'o;

/// Like [`run_graph`], reporting every evaluated top-level node.
pub fn run_graph_observed(
    graph: &Graph,
    functions: &Functions,
    inputs: &Inputs,
    observer: &mut Observer<'_>,
) -> Result<Vec<Tensor>> {
    check_inputs(graph, inputs)?;
    let order = topo_order(graph)?;
    let index = graph.node_index();
    let mut values: HashMap<&str, Vec<Tensor>> = HashMap::with_capacity(graph.nodes.len());

    fn fetch<'a>(
        graph: &'a Graph,
        values: &'a HashMap<&str, Vec<Tensor>>,
        inputs: &'a Inputs,
        r: &NodeRef,
    ) -> Result<&'a Tensor> {
        let missing = || Error::Runtime(format!("value {r} is not available"));
        match graph.resolve(&r.node).ok_or_else(missing)? {
            Source::Input(_) => inputs.get(&r.node).ok_or_else(missing),
            Source::Constant(i) => Ok(&graph.constants[i].value),
            Source::Node(_) => values
                .get(r.node.as_str())
                .and_then(|v| v.get(r.index))
                .ok_or_else(missing),
        }
    }

    for id in &order {
        let node = &graph.nodes[index[id.as_str()]];
        let args: Vec<&Tensor> = node
            .inputs
            .iter()
            .map(|r| fetch(graph, &values, inputs, r))
            .collect::<Result<_>>()?;
        let outs = if node.op == CALL_OP {
            let callee = node
                .callee()
                .ok_or_else(|| Error::Runtime(format!("call `{id}` without callee")))?;
            let f = functions
                .get(callee)
                .ok_or_else(|| Error::Runtime(format!("unknown function `{callee}`")))?;
            let owned: Vec<Tensor> = args.iter().map(|t| (*t).clone()).collect();
            run_function(f, functions, &owned)?
        } else {
            kernels::eval(&node.op, &node.attrs, &args)?
        };
        observer(node, &args, &outs);
        values.insert(node.id.as_str(), outs);
    }
    graph
        .outputs
        .iter()
        .map(|r| fetch(graph, &values, inputs, r).cloned())
        .collect()
}

/// Execute a function body with positional arguments.
pub fn run_function(f: &RegionFunction, functions: &Functions, args: &[Tensor]) -> Result<Vec<Tensor>> {
    if args.len() != f.body.inputs.len() {
        return Err(Error::Runtime(format!(
            "function `{}` takes {} arguments, got {}",
            f.name,
            f.body.inputs.len(),
            args.len()
        )));
    }
    let inputs: Inputs = f
        .body
        .inputs
        .iter()
        .zip(args)
        .map(|(d, t)| (d.name.clone(), t.clone()))
        .collect();
    run_graph(&f.body, functions, &inputs)
}

pub fn run_module(module: &Module, inputs: &Inputs) -> Result<Vec<Tensor>> {
    run_graph(&module.main, &module.functions, inputs)
}

/// Run a graph that contains no calls.
pub fn run(graph: &Graph, inputs: &Inputs) -> Result<Vec<Tensor>> {
    run_graph(graph, &Functions::new(), inputs)
}

/// Bitwise comparison of two output lists.
pub fn outputs_bitwise_eq(a: &[Tensor], b: &[Tensor]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bitwise_eq(y))
}
