//! Little-endian binary writer/reader shared by the blob container and the
//! fixed-point bitstream.

use crate::error::{Error, Result};
use crate::ir::{AttrValue, Attrs, DataType, Tensor, TensorData, TensorType};

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.u32(v.to_bits());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn dtype(&mut self, d: DataType) {
        self.u8(match d {
            DataType::F32 => 0,
            DataType::I8 => 1,
            DataType::I32 => 2,
            DataType::Bool => 3,
        });
    }

    pub fn ttype(&mut self, t: &TensorType) {
        self.dtype(t.dtype);
        self.u32(t.shape.len() as u32);
        for &d in &t.shape {
            self.usize(d);
        }
    }

    /// Raw element bits, no decimal conversion.
    pub fn tensor(&mut self, t: &Tensor) {
        self.ttype(&t.ttype());
        match t.data() {
            TensorData::F32(v) => v.iter().for_each(|&x| self.f32(x)),
            TensorData::I8(v) => v.iter().for_each(|&x| self.u8(x as u8)),
            TensorData::I32(v) => v.iter().for_each(|&x| self.u32(x as u32)),
            TensorData::Bool(v) => v.iter().for_each(|&x| self.u8(x as u8)),
        }
    }

    pub fn attrs(&mut self, attrs: &Attrs) {
        self.u32(attrs.len() as u32);
        for (k, v) in attrs {
            self.str(k);
            match v {
                AttrValue::Int(i) => {
                    self.u8(0);
                    self.i64(*i);
                }
                AttrValue::Real(r) => {
                    self.u8(1);
                    self.f64(*r);
                }
                AttrValue::Text(s) => {
                    self.u8(2);
                    self.str(s);
                }
                AttrValue::Bool(b) => {
                    self.u8(3);
                    self.u8(*b as u8);
                }
                AttrValue::Ints(v) => {
                    self.u8(4);
                    self.u32(v.len() as u32);
                    v.iter().for_each(|&i| self.i64(i));
                }
                AttrValue::Texts(v) => {
                    self.u8(5);
                    self.u32(v.len() as u32);
                    v.iter().for_each(|s| self.str(s));
                }
            }
        }
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8], what: &'static str) -> Self {
        Reader { data, pos: 0, what }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Truncated(format!(
                "{}: need {n} bytes at offset {}, {} left",
                self.what,
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// A length or count, checked against the bytes left so corrupt sizes
    /// fail as truncation instead of huge allocations.
    pub fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u64()?;
        self.check_count(n, min_item)
    }

    pub fn count32(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as u64;
        self.check_count(n, min_item)
    }

    fn check_count(&self, n: u64, min_item: usize) -> Result<usize> {
        if n.saturating_mul(min_item as u64) > self.remaining() as u64 {
            return Err(Error::Truncated(format!(
                "{}: length {n} exceeds the {} bytes left",
                self.what,
                self.remaining()
            )));
        }
        Ok(n as usize)
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Decode(format!("{}: size overflow", self.what)))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Decode(format!("{}: invalid UTF-8", self.what)))
    }

    pub fn dtype(&mut self) -> Result<DataType> {
        Ok(match self.u8()? {
            0 => DataType::F32,
            1 => DataType::I8,
            2 => DataType::I32,
            3 => DataType::Bool,
            t => return Err(Error::Decode(format!("{}: unknown dtype tag {t}", self.what))),
        })
    }

    pub fn ttype(&mut self) -> Result<TensorType> {
        let dtype = self.dtype()?;
        let rank = self.count32(8)?;
        let shape = (0..rank).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        Ok(TensorType::new(shape, dtype))
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let t = self.ttype()?;
        let n = t
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Decode(format!("{}: tensor size overflow", self.what)))?;
        if n.saturating_mul(t.dtype.byte_width()) > self.remaining() {
            return Err(Error::Truncated(format!("{}: tensor data cut short", self.what)));
        }
        let data = match t.dtype {
            DataType::F32 => TensorData::F32((0..n).map(|_| self.f32()).collect::<Result<_>>()?),
            DataType::I8 => TensorData::I8((0..n).map(|_| Ok(self.u8()? as i8)).collect::<Result<_>>()?),
            DataType::I32 => {
                TensorData::I32((0..n).map(|_| Ok(self.u32()? as i32)).collect::<Result<_>>()?)
            }
            DataType::Bool => TensorData::Bool((0..n).map(|_| Ok(self.u8()? != 0)).collect::<Result<_>>()?),
        };
        Tensor::new(t.shape, data)
    }

    pub fn attrs(&mut self) -> Result<Attrs> {
        let n = self.count32(9)?;
        let mut attrs = Attrs::new();
        for _ in 0..n {
            let k = self.str()?;
            let v = match self.u8()? {
                0 => AttrValue::Int(self.i64()?),
                1 => AttrValue::Real(self.f64()?),
                2 => AttrValue::Text(self.str()?),
                3 => AttrValue::Bool(self.u8()? != 0),
                4 => {
                    let m = self.count32(8)?;
                    AttrValue::Ints((0..m).map(|_| self.i64()).collect::<Result<_>>()?)
                }
                5 => {
                    let m = self.count32(8)?;
                    AttrValue::Texts((0..m).map(|_| self.str()).collect::<Result<_>>()?)
                }
                t => return Err(Error::Decode(format!("{}: unknown attribute tag {t}", self.what))),
            };
            attrs.insert(k, v);
        }
        Ok(attrs)
    }
}
