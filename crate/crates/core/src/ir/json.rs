//! Model ingestion format.
//!
//! ```text
//! {"inputs":[{"name":str,"shape":[int],"dtype":str}],
//!  "constants":[{"name":str,"shape":[int],"dtype":str,"data":[num]}],
//!  "nodes":[{"id":str,"op":str,"inputs":[[str,int]],"attrs":{...}}],
//!  "outputs":[[str,int]]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use super::graph::{ConstantTensor, Graph, GraphNode, InputDecl, NodeRef};
use super::types::{AttrValue, Attrs, DataType, Tensor, TensorData, TensorType};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputJson {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorJson {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: String,
    pub op: String,
    pub inputs: Vec<(String, usize)>,
    #[serde(default)]
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub inputs: Vec<InputJson>,
    #[serde(default)]
    pub constants: Vec<TensorJson>,
    pub nodes: Vec<NodeJson>,
    pub outputs: Vec<(String, usize)>,
}

pub fn attr_from_json(key: &str, v: &Value) -> Result<AttrValue> {
    let bad = || Error::Parse(format!("unsupported value for attribute `{key}`: {v}"));
    Ok(match v {
        Value::Bool(b) => AttrValue::Bool(*b),
        Value::String(s) => AttrValue::Text(s.clone()),
        Value::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => AttrValue::Int(i),
            _ => AttrValue::Real(n.as_f64().ok_or_else(bad)?),
        },
        Value::Array(items) => {
            if items.iter().all(|x| x.is_string()) && !items.is_empty() {
                AttrValue::Texts(items.iter().map(|x| x.as_str().unwrap().to_string()).collect())
            } else {
                AttrValue::Ints(
                    items
                        .iter()
                        .map(|x| if x.is_i64() { x.as_i64() } else { None })
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(bad)?,
                )
            }
        }
        _ => return Err(bad()),
    })
}

pub fn attr_to_json(v: &AttrValue) -> Result<Value> {
    Ok(match v {
        AttrValue::Int(i) => Value::from(*i),
        AttrValue::Real(r) => Value::Number(
            Number::from_f64(*r)
                .ok_or_else(|| Error::Parse(format!("non-finite attribute value {r}")))?,
        ),
        AttrValue::Text(s) => Value::from(s.clone()),
        AttrValue::Bool(b) => Value::from(*b),
        AttrValue::Ints(v) => Value::from(v.clone()),
        AttrValue::Texts(v) => Value::from(v.clone()),
    })
}

pub fn attrs_from_json(map: &BTreeMap<String, Value>) -> Result<Attrs> {
    map.iter()
        .map(|(k, v)| Ok((k.clone(), attr_from_json(k, v)?)))
        .collect()
}

pub fn attrs_to_json(attrs: &Attrs) -> Result<BTreeMap<String, Value>> {
    attrs
        .iter()
        .map(|(k, v)| Ok((k.clone(), attr_to_json(v)?)))
        .collect()
}

fn check_shape(what: &str, shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::Parse(format!("`{what}` has a zero-sized dimension")));
    }
    Ok(())
}

pub fn tensor_from_json(t: &TensorJson) -> Result<Tensor> {
    check_shape(&t.name, &t.shape)?;
    let dtype: DataType = t.dtype.parse()?;
    let data = match dtype {
        DataType::F32 => TensorData::F32(t.data.iter().map(|&v| v as f32).collect()),
        DataType::I8 => TensorData::I8(
            t.data
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && (-128.0..=127.0).contains(&v) {
                        Ok(v as i8)
                    } else {
                        Err(Error::Parse(format!("`{}`: {v} is not an i8", t.name)))
                    }
                })
                .collect::<Result<_>>()?,
        ),
        other => {
            return Err(Error::Parse(format!(
                "`{}`: tensors of dtype {other} cannot be stored",
                t.name
            )))
        }
    };
    Tensor::new(t.shape.clone(), data)
        .map_err(|e| Error::Parse(format!("`{}`: {e}", t.name)))
}

pub fn tensor_to_json(name: &str, t: &Tensor) -> TensorJson {
    let data = match t.data() {
        TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        TensorData::I8(v) => v.iter().map(|&x| x as f64).collect(),
        TensorData::I32(v) => v.iter().map(|&x| x as f64).collect(),
        TensorData::Bool(v) => v.iter().map(|&x| x as u8 as f64).collect(),
    };
    TensorJson {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        dtype: t.dtype().to_string(),
        data,
    }
}

impl ModelJson {
    pub fn into_graph(self) -> Result<Graph> {
        let inputs = self
            .inputs
            .into_iter()
            .map(|i| {
                check_shape(&i.name, &i.shape)?;
                Ok(InputDecl {
                    ttype: TensorType::new(i.shape, i.dtype.parse()?),
                    name: i.name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let constants = self
            .constants
            .iter()
            .map(|c| Ok(ConstantTensor::new(c.name.clone(), tensor_from_json(c)?)))
            .collect::<Result<Vec<_>>>()?;
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                Ok(GraphNode {
                    attrs: attrs_from_json(&n.attrs)?,
                    inputs: n.inputs.into_iter().map(|(s, i)| NodeRef::new(s, i)).collect(),
                    id: n.id,
                    op: n.op,
                    out_types: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Graph {
            inputs,
            constants,
            nodes,
            outputs: self.outputs.into_iter().map(|(s, i)| NodeRef::new(s, i)).collect(),
        })
    }

    pub fn from_graph(g: &Graph) -> Result<Self> {
        Ok(ModelJson {
            inputs: g
                .inputs
                .iter()
                .map(|i| InputJson {
                    name: i.name.clone(),
                    shape: i.ttype.shape.clone(),
                    dtype: i.ttype.dtype.to_string(),
                })
                .collect(),
            constants: g
                .constants
                .iter()
                .map(|c| tensor_to_json(&c.name, &c.value))
                .collect(),
            nodes: g
                .nodes
                .iter()
                .map(|n| {
                    Ok(NodeJson {
                        id: n.id.clone(),
                        op: n.op.clone(),
                        inputs: n.inputs.iter().map(|r| (r.node.clone(), r.index)).collect(),
                        attrs: attrs_to_json(&n.attrs)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            outputs: g.outputs.iter().map(|r| (r.node.clone(), r.index)).collect(),
        })
    }
}

/// Parse a model file's contents. Unknown keys are rejected.
pub fn parse_model(text: &str) -> Result<Graph> {
    let m: ModelJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    m.into_graph()
}

pub fn model_to_string(g: &Graph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelJson::from_graph(g)?)?)
}

/// Named input tensors, as consumed by `run` and calibration directories:
/// `{"inputs":[{"name":str,"shape":[int],"dtype":str,"data":[num]}]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFileJson {
    pub inputs: Vec<TensorJson>,
}

pub fn parse_inputs(text: &str) -> Result<BTreeMap<String, Tensor>> {
    let f: InputFileJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    f.inputs
        .iter()
        .map(|t| Ok((t.name.clone(), tensor_from_json(t)?)))
        .collect()
}

pub fn inputs_to_string(inputs: &BTreeMap<String, Tensor>) -> Result<String> {
    let f = InputFileJson {
        inputs: inputs.iter().map(|(n, t)| tensor_to_json(n, t)).collect(),
    };
    Ok(serde_json::to_string(&f)?)
}

/// `{"outputs":[{"shape":[int],"dtype":str,"data":[num]}]}`
pub fn outputs_to_json(outputs: &[Tensor]) -> Value {
    let items = outputs
        .iter()
        .map(|t| {
            let j = tensor_to_json("", t);
            let mut m = Map::new();
            m.insert("shape".into(), Value::from(j.shape));
            m.insert("dtype".into(), Value::from(j.dtype));
            m.insert(
                "data".into(),
                Value::Array(
                    j.data
                        .into_iter()
                        .map(|x| Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null))
                        .collect(),
                ),
            );
            Value::Object(m)
        })
        .collect();
    let mut root = Map::new();
    root.insert("outputs".into(), Value::Array(items));
    Value::Object(root)
}
