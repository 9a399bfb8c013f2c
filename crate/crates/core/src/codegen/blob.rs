//! Blob container: magic `BYOC`, u32 version, then sections of
//! `kind u8 | len u64 | bytes`. Kinds: 1 metadata, 2 host plan, 3 accelerator
//! sub-module. All integers little-endian.

use std::path::Path;

use super::{
    AccelSubModule, CompiledModule, EntryInfo, EntrySource, HostSubModule, Instr, MetaConstant,
    MetadataBlob, PayloadFormat,
};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const BLOB_MAGIC: &[u8; 4] = b"BYOC";
pub const BLOB_VERSION: u32 = 1;

const SEC_METADATA: u8 = 1;
const SEC_HOST: u8 = 2;
const SEC_ACCEL: u8 = 3;

fn ids(w: &mut Writer, v: &[usize]) {
    w.u32(v.len() as u32);
    v.iter().for_each(|&i| w.usize(i));
}

fn read_ids(r: &mut Reader) -> Result<Vec<usize>> {
    let n = r.count32(8)?;
    (0..n).map(|_| r.usize()).collect()
}

fn write_metadata(m: &MetadataBlob) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(m.constants.len() as u32);
    for c in &m.constants {
        w.str(&c.name);
        w.u32(c.owners.len() as u32);
        c.owners.iter().for_each(|o| w.str(o));
        w.tensor(&c.value);
    }
    w.u32(m.entries.len() as u32);
    for e in &m.entries {
        w.usize(e.id);
        w.ttype(&e.ttype);
        match &e.source {
            EntrySource::Input(n) => {
                w.u8(0);
                w.str(n);
            }
            EntrySource::Constant(n) => {
                w.u8(1);
                w.str(n);
            }
            EntrySource::Intermediate => w.u8(2),
        }
    }
    w.buf
}

fn read_metadata(data: &[u8]) -> Result<MetadataBlob> {
    let mut r = Reader::new(data, "metadata section");
    let n = r.count32(16)?;
    let mut constants = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let k = r.count32(8)?;
        let owners = (0..k).map(|_| r.str()).collect::<Result<_>>()?;
        let value = r.tensor()?;
        constants.push(MetaConstant { name, owners, value });
    }
    let n = r.count32(14)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.usize()?;
        let ttype = r.ttype()?;
        let source = match r.u8()? {
            0 => EntrySource::Input(r.str()?),
            1 => EntrySource::Constant(r.str()?),
            2 => EntrySource::Intermediate,
            t => return Err(Error::Decode(format!("unknown entry source tag {t}"))),
        };
        entries.push(EntryInfo { id, ttype, source });
    }
    finish(&r)?;
    Ok(MetadataBlob { constants, entries })
}

fn write_host(h: &HostSubModule) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(h.plan.len() as u32);
    for instr in &h.plan {
        match instr {
            Instr::Op {
                op,
                attrs,
                inputs,
                outputs,
            } => {
                w.u8(0);
                w.str(op);
                w.attrs(attrs);
                ids(&mut w, inputs);
                ids(&mut w, outputs);
            }
            Instr::ExternCall {
                fn_name,
                inputs,
                outputs,
            } => {
                w.u8(1);
                w.str(fn_name);
                ids(&mut w, inputs);
                ids(&mut w, outputs);
            }
        }
    }
    ids(&mut w, &h.outputs);
    w.buf
}

fn read_host(data: &[u8]) -> Result<HostSubModule> {
    let mut r = Reader::new(data, "host section");
    let n = r.count32(17)?;
    let mut plan = Vec::with_capacity(n);
    for _ in 0..n {
        let instr = match r.u8()? {
            0 => Instr::Op {
                op: r.str()?,
                attrs: r.attrs()?,
                inputs: read_ids(&mut r)?,
                outputs: read_ids(&mut r)?,
            },
            1 => Instr::ExternCall {
                fn_name: r.str()?,
                inputs: read_ids(&mut r)?,
                outputs: read_ids(&mut r)?,
            },
            t => return Err(Error::Decode(format!("unknown instruction tag {t}"))),
        };
        plan.push(instr);
    }
    let outputs = read_ids(&mut r)?;
    finish(&r)?;
    Ok(HostSubModule { plan, outputs })
}

fn write_accel(a: &AccelSubModule) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(&a.fn_name);
    w.str(&a.target);
    w.u8(a.format.tag());
    w.bytes(&a.payload);
    w.buf
}

fn read_accel(data: &[u8]) -> Result<AccelSubModule> {
    let mut r = Reader::new(data, "accelerator section");
    let a = AccelSubModule {
        fn_name: r.str()?,
        target: r.str()?,
        format: PayloadFormat::from_tag(r.u8()?)?,
        payload: r.bytes()?.to_vec(),
    };
    finish(&r)?;
    Ok(a)
}

fn finish(r: &Reader) -> Result<()> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(Error::Decode(format!("{} trailing bytes in section", r.remaining())))
    }
}

pub fn to_bytes(cm: &CompiledModule) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(BLOB_MAGIC);
    w.u32(cm.version);
    let mut section = |kind: u8, body: Vec<u8>| {
        w.u8(kind);
        w.bytes(&body);
    };
    section(SEC_METADATA, write_metadata(&cm.metadata));
    section(SEC_HOST, write_host(&cm.host));
    for a in &cm.accels {
        section(SEC_ACCEL, write_accel(a));
    }
    w.buf
}

pub fn from_bytes(data: &[u8]) -> Result<CompiledModule> {
    if data.len() < 4 || &data[..4] != BLOB_MAGIC {
        return Err(Error::BadMagic { expected: "BYOC" });
    }
    let mut r = Reader::new(&data[4..], "blob");
    let version = r.u32()?;
    if version != BLOB_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: BLOB_VERSION,
        });
    }
    let mut metadata = None;
    let mut host = None;
    let mut accels: Vec<AccelSubModule> = Vec::new();
    while !r.is_empty() {
        let kind = r.u8()?;
        let body = r.bytes()?;
        match kind {
            SEC_METADATA if metadata.is_none() => metadata = Some(read_metadata(body)?),
            SEC_HOST if host.is_none() => host = Some(read_host(body)?),
            SEC_ACCEL => {
                let a = read_accel(body)?;
                if accels.iter().any(|b| b.fn_name == a.fn_name) {
                    return Err(Error::Decode(format!("duplicate sub-module `{}`", a.fn_name)));
                }
                accels.push(a);
            }
            SEC_METADATA | SEC_HOST => return Err(Error::Decode(format!("duplicate section kind {kind}"))),
            _ => return Err(Error::Decode(format!("unknown section kind {kind}"))),
        }
    }
    let missing = |what: &str| Error::Truncated(format!("blob has no {what} section"));
    let cm = CompiledModule {
        version,
        host: host.ok_or_else(|| missing("host"))?,
        accels,
        metadata: metadata.ok_or_else(|| missing("metadata"))?,
    };
    for i in &cm.host.plan {
        if let Instr::ExternCall { fn_name, .. } = i {
            if cm.accel(fn_name).is_none() {
                return Err(Error::Decode(format!("external call to missing sub-module `{fn_name}`")));
            }
        }
    }
    Ok(cm)
}

pub fn save_module(cm: &CompiledModule, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(cm))?;
    Ok(())
}

pub fn load_module(path: impl AsRef<Path>) -> Result<CompiledModule> {
    from_bytes(&std::fs::read(path)?)
}
