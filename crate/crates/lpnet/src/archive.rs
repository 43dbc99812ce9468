//! Binary persistence of trained networks.
//!
//! Layout: 8-byte magic `LPNETW01`; `L` (u32 LE); `L + 1` dims (u32 LE);
//! tie flag (u8); per level `l = 1..=L`: `tau_l` (f64 LE), `A_{l-1}`
//! row-major f64 LE, and for untied networks a presence byte followed by
//! `B_{l-1}` row-major f64 LE; trailing u64 LE checksum (wrapping byte
//! sum of everything after the magic).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::prelude::*;

use crate::error::{LpError, Result};
use crate::model::{GoalSpec, Network, NodeParams};

const MAGIC: &[u8; 8] = b"LPNETW01";

struct ChecksumWriter<W: Write> {
    inner: W,
    sum: u64,
}

impl<W: Write> Write for ChecksumWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        for &b in &buf[..n] {
            self.sum = self.sum.wrapping_add(b as u64);
        }
        Ok(n)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

struct ChecksumReader<R: Read> {
    inner: R,
    sum: u64,
}

impl<R: Read> Read for ChecksumReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        for &b in &buf[..n] {
            self.sum = self.sum.wrapping_add(b as u64);
        }
        Ok(n)
    }
}

fn write_matrix<W: Write>(w: &mut W, m: ArrayView2<'_, f64>) -> Result<()> {
    for &v in m.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.read_f64::<LittleEndian>()?);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| LpError::Format(format!("matrix shape: {e}")))
}

/// Serializes the network weights; `load_network` reproduces them bitwise.
pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = ChecksumWriter {
        inner: file,
        sum: 0,
    };
    w.write_all(MAGIC)?;
    w.sum = 0; // the magic is outside the checksummed payload
    let dims = net.dims();
    let levels = net.num_levels();
    w.write_u32::<LittleEndian>(levels as u32)?;
    for &d in &dims {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    w.write_all(&[net.tie_backward() as u8])?;
    for l in 1..=levels {
        w.write_f64::<LittleEndian>(net.threshold(l))?;
        write_matrix(&mut w, net.forward_weight(l))?;
        if !net.tie_backward() {
            match net.backward_weight(l - 1) {
                Some(b) => {
                    w.write_all(&[1])?;
                    write_matrix(&mut w, b)?;
                }
                None => w.write_all(&[0])?,
            }
        }
    }
    let sum = w.sum;
    w.write_u64::<LittleEndian>(sum)?;
    w.flush()?;
    Ok(())
}

/// Loads a network saved by [`save_network`]. Goal specifications are not
/// persisted; every level loads as goal-free.
pub fn load_network(path: &Path) -> Result<Network> {
    let file = BufReader::new(File::open(path)?);
    let mut r = ChecksumReader {
        inner: file,
        sum: 0,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LpError::Format(format!(
            "bad archive magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    r.sum = 0;
    let levels = r.read_u32::<LittleEndian>()? as usize;
    if levels == 0 {
        return Err(LpError::Format("archive with zero levels".into()));
    }
    let mut dims = Vec::with_capacity(levels + 1);
    for _ in 0..=levels {
        dims.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let mut tie = [0u8; 1];
    r.read_exact(&mut tie)?;
    let tie_backward = tie[0] != 0;

    let mut nodes = Vec::with_capacity(levels);
    let mut backwards: Vec<Option<Array2<f64>>> = Vec::with_capacity(levels);
    for l in 1..=levels {
        let threshold = r.read_f64::<LittleEndian>()?;
        let forward = read_matrix(&mut r, dims[l], dims[l - 1])?;
        let b = if !tie_backward {
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            if flag[0] == 1 {
                Some(read_matrix(&mut r, dims[l - 1], dims[l])?)
            } else {
                None
            }
        } else {
            None
        };
        backwards.push(b);
        nodes.push(NodeParams {
            level: l,
            forward,
            backward: None,
            threshold,
            goal: GoalSpec::NoGoal,
        });
    }
    let computed = r.sum;
    let stored = r.read_u64::<LittleEndian>()?;
    if computed != stored {
        return Err(LpError::Format(format!(
            "archive checksum mismatch: stored {stored}, computed {computed}"
        )));
    }

    let mut b0 = None;
    for (i, b) in backwards.into_iter().enumerate() {
        if i == 0 {
            b0 = b;
        } else {
            nodes[i - 1].backward = b;
        }
    }
    Ok(Network::from_parts(dims[0], nodes, b0, tie_backward))
}

/// Human-readable archive summary for inspection.
#[derive(Debug, Clone)]
pub struct ArchiveSummary {
    pub levels: usize,
    pub dims: Vec<usize>,
    pub tie_backward: bool,
    pub thresholds: Vec<f64>,
    pub forward_norms: Vec<f64>,
    pub checksum: u64,
}

pub fn inspect_archive(path: &Path) -> Result<ArchiveSummary> {
    let net = load_network(path)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 {
        return Err(LpError::Format("archive too short".into()));
    }
    let checksum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let levels = net.num_levels();
    Ok(ArchiveSummary {
        levels,
        dims: net.dims(),
        tie_backward: net.tie_backward(),
        thresholds: (1..=levels).map(|l| net.threshold(l)).collect(),
        forward_norms: (1..=levels)
            .map(|l| net.forward_weight(l).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect(),
        checksum,
    })
}
