//! Binary container shared by instances and quantization logs.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  "QPRX"        4 bytes
//! version u16
//! N, d, m, rows        u32 each (d = max |𝒩(i)| − 1, m and rows are maxima)
//! kind   u8            0 = instance, 1 = quantization log
//! body                 kind-specific; matrices are f64, row-major
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::graph::Graph;
use super::instance::ProblemInstance;
use super::regularizer::Regularizer;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"QPRX";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    Instance = 0,
    QuantLog = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub nodes: u32,
    pub degree: u32,
    pub block_dim: u32,
    pub rows: u32,
    pub kind: ContainerKind,
}

impl Header {
    pub fn for_instance(inst: &ProblemInstance, kind: ContainerKind) -> Self {
        Header {
            version: VERSION,
            nodes: inst.node_count() as u32,
            degree: (inst.graph().max_degree() - 1) as u32,
            block_dim: inst.max_block_dim() as u32,
            rows: (0..inst.node_count()).map(|i| inst.rows(i)).max().unwrap_or(0) as u32,
            kind,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        for v in [self.nodes, self.degree, self.block_dim, self.rows] {
            write_u32(w, v)?;
        }
        w.write_all(&[self.kind as u8])?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Codec(format!("bad container magic {magic:?}")));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != VERSION {
            return Err(Error::Codec(format!("unsupported container version {version}")));
        }
        let nodes = read_u32(r)?;
        let degree = read_u32(r)?;
        let block_dim = read_u32(r)?;
        let rows = read_u32(r)?;
        let kind = match read_u8(r)? {
            0 => ContainerKind::Instance,
            1 => ContainerKind::QuantLog,
            k => return Err(Error::Codec(format!("unknown container kind {k}"))),
        };
        Ok(Header { version, nodes, degree, block_dim, rows, kind })
    }
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

/// Writes an instance. Body: per-node `m_i` and `rows_i`, closed
/// neighborhoods (count + ids), regularizer (tag u8 + two f64), every `H_i`
/// row-major, every `h_i`, then `x_gen`.
pub fn save_instance<W: Write>(inst: &ProblemInstance, w: &mut W) -> Result<()> {
    Header::for_instance(inst, ContainerKind::Instance).write(w)?;
    let n = inst.node_count();
    for i in 0..n {
        write_u32(w, inst.block_dim(i) as u32)?;
    }
    for i in 0..n {
        write_u32(w, inst.rows(i) as u32)?;
    }
    for i in 0..n {
        let nb = inst.graph().neighborhood(i);
        write_u32(w, nb.len() as u32)?;
        for &j in nb {
            write_u32(w, j as u32)?;
        }
    }
    let reg = inst.regularizer();
    let (w1, w2) = reg.weights();
    w.write_all(&[reg.tag()])?;
    write_f64s(w, &[w1, w2])?;
    for i in 0..n {
        let h = inst.matrix(i);
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                w.write_all(&h[(r, c)].to_le_bytes())?;
            }
        }
    }
    for i in 0..n {
        write_f64s(w, inst.target(i).as_slice())?;
    }
    write_f64s(w, inst.generator())?;
    Ok(())
}

pub fn load_instance<R: Read>(r: &mut R) -> Result<ProblemInstance> {
    let header = Header::read(r)?;
    if header.kind != ContainerKind::Instance {
        return Err(Error::Codec("container does not hold an instance".into()));
    }
    let n = header.nodes as usize;
    let dims: Vec<usize> = (0..n).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..n).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<_>>()?;
    let mut neighborhoods = Vec::with_capacity(n);
    for _ in 0..n {
        let count = read_u32(r)? as usize;
        if count > n {
            return Err(Error::Codec(format!("neighborhood of size {count} in a {n}-node graph")));
        }
        neighborhoods.push((0..count).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?);
    }
    let graph = Graph::from_neighborhoods(neighborhoods)?;
    let tag = read_u8(r)?;
    let w1 = read_f64(r)?;
    let w2 = read_f64(r)?;
    let regularizer = Regularizer::from_tag(tag, w1, w2)?;
    let mut matrices = Vec::with_capacity(n);
    for (i, &ri) in rows.iter().enumerate() {
        let cols: usize = graph.neighborhood(i).iter().map(|&j| dims[j]).sum();
        let vals = read_f64s(r, ri * cols)?;
        matrices.push(DMatrix::from_row_slice(ri, cols, &vals));
    }
    let mut targets = Vec::with_capacity(n);
    for &ri in &rows {
        targets.push(DVector::from_vec(read_f64s(r, ri)?));
    }
    let p: usize = dims.iter().sum();
    let generator = read_f64s(r, p)?;
    ProblemInstance::new(graph, dims, matrices, targets, regularizer, generator)
}

/// CSV with one row per coordinate of `x_gen`: `index,node,component,value`.
pub fn generator_csv(inst: &ProblemInstance) -> String {
    let mut out = String::from("index,node,component,value\n");
    for i in 0..inst.node_count() {
        for (c, k) in inst.block_range(i).enumerate() {
            out.push_str(&format!("{k},{i},{c},{:e}\n", inst.generator()[k]));
        }
    }
    out
}
