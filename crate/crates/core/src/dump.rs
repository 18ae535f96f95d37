//! Versioned binary dump of one [`ChannelRealization`], for debugging.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "CRANRLZ\0" | version u16 | R u32 | K u32 | M u32 | N u32 | U_1..U_R u32
//! nu f64 | zeta f64
//! access channels   R x (M x K)   complex
//! LoS matrix        N x K         complex
//! scatter matrix    N x K         complex
//! access estimates  M x U_r       complex, per RRU
//! fronthaul est.    N x K         complex
//! amplification     K             f64
//! ```
//!
//! Complex entries are `(re, im)` pairs in column-major order. The decoder
//! checks every size against the remaining input before allocating.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::channel::{AccessChannelSet, FronthaulChannel};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mcoracle::ChannelRealization;

pub const MAGIC: [u8; 8] = *b"CRANRLZ\0";
pub const VERSION: u16 = 1;

/// Upper bound on any single dimension.
pub const MAX_DIM: u32 = 1 << 16;

fn bad(msg: impl Into<String>) -> Error {
    Error::Dump(msg.into())
}

fn put_matrix(out: &mut Vec<u8>, m: &CMatrix) {
    for c in m.iter() {
        out.write_f64::<LittleEndian>(c.re).unwrap();
        out.write_f64::<LittleEndian>(c.im).unwrap();
    }
}

/// Serializes `real`; fails on inconsistent shapes.
pub fn encode(real: &ChannelRealization) -> Result<Vec<u8>> {
    let r = real.access.per_rru.len();
    let k = real.fronthaul.h_det.ncols();
    let n = real.fronthaul.h_det.nrows();
    let m = real.access.per_rru.first().map_or(0, |h| h.nrows());
    let shapes_ok = r > 0
        && real.access.per_rru.iter().all(|h| h.shape() == (m, k))
        && real.fronthaul.h_scatter.shape() == (n, k)
        && real.fronthaul_estimate.shape() == (n, k)
        && real.access_estimate.len() == r
        && real.access_estimate.iter().all(|e| e.nrows() == m)
        && real.access_estimate.iter().map(|e| e.ncols()).sum::<usize>() == k
        && real.amplification.len() == k;
    if !shapes_ok {
        return Err(bad("realization has inconsistent shapes"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.write_u16::<LittleEndian>(VERSION)?;
    for d in [r, k, m, n] {
        out.write_u32::<LittleEndian>(d as u32)?;
    }
    for e in &real.access_estimate {
        out.write_u32::<LittleEndian>(e.ncols() as u32)?;
    }
    out.write_f64::<LittleEndian>(real.fronthaul.nu)?;
    out.write_f64::<LittleEndian>(real.fronthaul.zeta)?;
    for h in &real.access.per_rru {
        put_matrix(&mut out, h);
    }
    put_matrix(&mut out, &real.fronthaul.h_det);
    put_matrix(&mut out, &real.fronthaul.h_scatter);
    for e in &real.access_estimate {
        put_matrix(&mut out, e);
    }
    put_matrix(&mut out, &real.fronthaul_estimate);
    for &a in &real.amplification {
        out.write_f64::<LittleEndian>(a)?;
    }
    Ok(out)
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LittleEndian>().map_err(|_| bad(format!("truncated at {what}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let v = self.cur.read_f64::<LittleEndian>().map_err(|_| bad(format!("truncated at {what}")))?;
        if !v.is_finite() {
            return Err(bad(format!("non-finite value in {what}")));
        }
        Ok(v)
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<CMatrix> {
        let needed = rows.checked_mul(cols).and_then(|e| e.checked_mul(16));
        if needed.is_none_or(|b| b > self.remaining()) {
            return Err(bad(format!("{what}: {rows}x{cols} exceeds the remaining input")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let re = self.f64(what)?;
            let im = self.f64(what)?;
            data.push(Complex64::new(re, im));
        }
        Ok(CMatrix::from_vec(rows, cols, data))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ChannelRealization> {
    let mut rd = Reader { cur: Cursor::new(bytes) };
    let mut magic = [0u8; 8];
    rd.cur.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = rd.cur.read_u16::<LittleEndian>().map_err(|_| bad("truncated version"))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 4];
    for (d, name) in dims.iter_mut().zip(["R", "K", "M", "N"]) {
        let v = rd.u32(name)?;
        if v == 0 || v > MAX_DIM {
            return Err(bad(format!("{name} = {v} out of range")));
        }
        *d = v as usize;
    }
    let [r, k, m, n] = dims;
    if r > rd.remaining() / 4 {
        return Err(bad(format!("R = {r} exceeds the remaining input")));
    }
    let mut uds = Vec::with_capacity(r);
    for _ in 0..r {
        let u = rd.u32("U_r")? as usize;
        if u == 0 || u > k {
            return Err(bad(format!("U_r = {u} out of range")));
        }
        uds.push(u);
    }
    if uds.iter().sum::<usize>() != k {
        return Err(bad("sum of U_r differs from K"));
    }
    let nu = rd.f64("nu")?;
    let zeta = rd.f64("zeta")?;
    let per_rru = (0..r).map(|_| rd.matrix(m, k, "access channel")).collect::<Result<Vec<_>>>()?;
    let h_det = rd.matrix(n, k, "LoS matrix")?;
    let h_scatter = rd.matrix(n, k, "scatter matrix")?;
    let access_estimate =
        uds.iter().map(|&u| rd.matrix(m, u, "access estimate")).collect::<Result<Vec<_>>>()?;
    let fronthaul_estimate = rd.matrix(n, k, "fronthaul estimate")?;
    if k > rd.remaining() / 8 {
        return Err(bad("truncated amplification"));
    }
    let amplification = (0..k).map(|_| rd.f64("amplification")).collect::<Result<Vec<_>>>()?;
    if rd.remaining() != 0 {
        return Err(bad(format!("{} trailing bytes", rd.remaining())));
    }
    Ok(ChannelRealization {
        access: AccessChannelSet { per_rru },
        fronthaul: FronthaulChannel { h_det, h_scatter, nu, zeta },
        access_estimate,
        fronthaul_estimate,
        amplification,
    })
}

pub fn write_dump(path: impl AsRef<Path>, real: &ChannelRealization) -> Result<()> {
    let bytes = encode(real)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<ChannelRealization> {
    decode(&std::fs::read(path)?)
}
