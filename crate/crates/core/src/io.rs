//! File formats: the raw tensor container (magic "RPSM1\0", little-endian
//! f32 payload), schedule CSV, and diagnostics CSV parsing.
//!
//! Conventions used by the tools:
//! - dynamic objects: rank 3, dims [p, n, n], frame-major then row-major
//! - sinograms: rank 2, dims [p, n_det]
//! - factor matrices: lambda [k, n*n], z [k, d], u [p, d]

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::{DynamicObject, ImageFrame};
use crate::psm::PsmFactors;
use crate::tomo::Sinogram;

const TENSOR_MAGIC: &[u8; 6] = b"RPSM1\0";

/// Write a raw tensor: header (magic, u32 rank, u32 dims[rank]) then the f32
/// little-endian payload in row-major order.
pub fn write_tensor(path: impl AsRef<Path>, dims: &[usize], data: &[f64]) -> Result<()> {
    let expect: usize = dims.iter().product();
    if expect != data.len() {
        return Err(Error::shape("write_tensor", expect, data.len()));
    }
    let mut buf = Vec::with_capacity(14 + 4 * data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Read a raw tensor back as (dims, f64 payload).
pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let take = |off: &mut usize, k: usize| -> Result<&[u8]> {
        if *off + k > bytes.len() {
            return Err(Error::Format("tensor file truncated".into()));
        }
        let s = &bytes[*off..*off + k];
        *off += k;
        Ok(s)
    };
    let mut off = 0usize;
    if take(&mut off, 6)? != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let rank = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
    }
    let count: usize = dims.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as f64);
    }
    if off != bytes.len() {
        return Err(Error::Format("trailing bytes in tensor file".into()));
    }
    Ok((dims, data))
}

/// Save a dynamic object as rank-3 [p, n, n]. Columns of the object are
/// row-major frames, so the payload is the column-major matrix data as-is.
pub fn save_object(path: impl AsRef<Path>, obj: &DynamicObject) -> Result<()> {
    write_tensor(path, &[obj.p(), obj.n(), obj.n()], obj.data().as_slice())
}

pub fn load_object(path: impl AsRef<Path>) -> Result<DynamicObject> {
    let (dims, data) = read_tensor(path)?;
    match dims.as_slice() {
        [p, n, n2] if n == n2 => {
            let m = DMatrix::from_column_slice(n * n, *p, &data);
            DynamicObject::new(*n, m)
        }
        [n, n2] if n == n2 => {
            // single static frame promoted to a 1-frame object
            let m = DMatrix::from_column_slice(n * n, 1, &data);
            DynamicObject::new(*n, m)
        }
        other => Err(Error::Format(format!(
            "expected [p, n, n] or [n, n] object tensor, got {other:?}"
        ))),
    }
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<ImageFrame> {
    let (dims, data) = read_tensor(path)?;
    match dims.as_slice() {
        [n, n2] if n == n2 => ImageFrame::from_vec(*n, data),
        other => Err(Error::Format(format!(
            "expected square [n, n] frame tensor, got {other:?}"
        ))),
    }
}

pub fn save_frame(path: impl AsRef<Path>, frame: &ImageFrame) -> Result<()> {
    write_tensor(path, &[frame.n(), frame.n()], frame.as_slice())
}

/// Save sinogram values as rank-2 [p, n_det]; angles travel in the schedule CSV.
pub fn save_sinogram(path: impl AsRef<Path>, g: &Sinogram) -> Result<()> {
    write_tensor(path, &[g.p(), g.n_det()], g.data().as_slice())
}

pub fn load_sinogram(path: impl AsRef<Path>, angles: &[f64]) -> Result<Sinogram> {
    let (dims, data) = read_tensor(path)?;
    match dims.as_slice() {
        [p, n] => {
            if *p != angles.len() {
                return Err(Error::shape("load_sinogram angles", *p, angles.len()));
            }
            Sinogram::new(*n, angles.to_vec(), DMatrix::from_column_slice(*n, *p, &data))
        }
        other => Err(Error::Format(format!(
            "expected [p, n_det] sinogram tensor, got {other:?}"
        ))),
    }
}

/// Factor files within a directory: lambda.raw [k, n*n], z.raw [k, d],
/// u.raw [p, d].
pub fn save_factors(dir: impl AsRef<Path>, f: &PsmFactors) -> Result<()> {
    let dir = dir.as_ref();
    let (n2, k, d, p) = (f.n() * f.n(), f.k(), f.d(), f.p());
    // store transposed so each basis function is a contiguous row
    let mut lambda = Vec::with_capacity(n2 * k);
    for j in 0..k {
        lambda.extend(f.lambda().column(j).iter());
    }
    write_tensor(dir.join("lambda.raw"), &[k, n2], &lambda)?;
    let mut z = Vec::with_capacity(d * k);
    for j in 0..k {
        z.extend(f.z().column(j).iter());
    }
    write_tensor(dir.join("z.raw"), &[k, d], &z)?;
    let mut u = Vec::with_capacity(p * d);
    for t in 0..p {
        for m in 0..d {
            u.push(f.u()[(t, m)]);
        }
    }
    write_tensor(dir.join("u.raw"), &[p, d], &u)
}

pub fn load_factors(dir: impl AsRef<Path>, n: usize) -> Result<PsmFactors> {
    let dir = dir.as_ref();
    let (ldims, ldata) = read_tensor(dir.join("lambda.raw"))?;
    let (zdims, zdata) = read_tensor(dir.join("z.raw"))?;
    let (udims, udata) = read_tensor(dir.join("u.raw"))?;
    let (k, n2) = match ldims.as_slice() {
        [k, n2] => (*k, *n2),
        other => return Err(Error::Format(format!("bad lambda dims {other:?}"))),
    };
    if n2 != n * n {
        return Err(Error::shape("load_factors lambda", n * n, n2));
    }
    let (kz, d) = match zdims.as_slice() {
        [k, d] => (*k, *d),
        other => return Err(Error::Format(format!("bad z dims {other:?}"))),
    };
    if kz != k {
        return Err(Error::shape("load_factors z", k, kz));
    }
    let (p, du) = match udims.as_slice() {
        [p, d] => (*p, *d),
        other => return Err(Error::Format(format!("bad u dims {other:?}"))),
    };
    if du != d {
        return Err(Error::shape("load_factors u", d, du));
    }
    let lambda = DMatrix::from_fn(n2, k, |i, j| ldata[j * n2 + i]);
    let z = DMatrix::from_fn(d, k, |m, j| zdata[j * d + m]);
    let u = DMatrix::from_fn(p, d, |t, m| udata[t * d + m]);
    PsmFactors::new(n, lambda, z, u)
}

/// Schedule CSV: `t,angle` header then one row per time step.
pub fn write_schedule_csv(path: impl AsRef<Path>, angles: &[f64]) -> Result<()> {
    let mut out = String::from("t,angle\n");
    for (t, a) in angles.iter().enumerate() {
        out.push_str(&format!("{t},{a}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_schedule_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut angles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "t,angle" {
                return Err(Error::Format(format!("bad schedule header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (t_str, a_str) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("bad schedule row '{line}'")))?;
        let t: usize = t_str
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad schedule index '{t_str}'")))?;
        if t != i - 1 {
            return Err(Error::Format(format!("non-contiguous schedule index {t}")));
        }
        let a: f64 = a_str
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad schedule angle '{a_str}'")))?;
        angles.push(a);
    }
    if angles.is_empty() {
        return Err(Error::Format("empty schedule".into()));
    }
    Ok(angles)
}

/// A parsed diagnostics CSV row (the columns the `diagnose` checks need).
#[derive(Clone, Copy, Debug)]
pub struct DiagRow {
    pub iter: usize,
    pub lagrangian: f64,
    pub gap: f64,
    pub res_f: f64,
    pub res_lambda: f64,
    pub res_psi: f64,
    pub d_f: f64,
    pub d_gamma: f64,
    pub norm_f: f64,
}

/// Parse a diagnostics CSV produced by the solver.
pub fn read_diagnostics_csv(path: impl AsRef<Path>) -> Result<Vec<DiagRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty diagnostics CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format(format!("diagnostics CSV missing column '{name}'")))
    };
    let (ci, cl, cg, crf, crl, crp, cdf, cdg, cnf) = (
        find("iter")?,
        find("lagrangian")?,
        find("gap")?,
        find("res_f")?,
        find("res_lambda")?,
        find("res_psi")?,
        find("d_f")?,
        find("d_gamma")?,
        find("norm_f")?,
    );
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad diagnostics row '{line}'")))
        };
        rows.push(DiagRow {
            iter: get(ci)? as usize,
            lagrangian: get(cl)?,
            gap: get(cg)?,
            res_f: get(crf)?,
            res_lambda: get(crl)?,
            res_psi: get(crp)?,
            d_f: get(cdf)?,
            d_gamma: get(cdg)?,
            norm_f: get(cnf)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("diagnostics CSV has no rows".into()));
    }
    Ok(rows)
}
