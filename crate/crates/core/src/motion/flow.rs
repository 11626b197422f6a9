//! Dense displacement fields and the `SINFLO1` flow file format.
//!
//! Layout (all little-endian): 7-byte magic `SINFLO1`, `u8` dimensionality
//! `d`, `d` × `u32` grid sizes (x first), `u32` frame count `T`, then
//! `T · Π sizes · d` `f32` displacements ordered frame-major, voxel-minor
//! (x fastest), component-last.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::shape::GridShape;
use crate::Point;

pub const FLOW_MAGIC: &[u8; 7] = b"SINFLO1";

/// Per-voxel displacement in pixels/frame, components `(x, y[, z])`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    shape: GridShape,
    displacement: Vec<f32>,
}

impl FlowField {
    pub fn new(shape: GridShape, displacement: Vec<f32>) -> Result<Self> {
        let expected = shape.len() * shape.ndim();
        if displacement.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} displacement values"),
                got: displacement.len().to_string(),
            });
        }
        Ok(Self {
            shape,
            displacement,
        })
    }

    pub fn zeros(shape: GridShape) -> Self {
        let n = shape.len() * shape.ndim();
        Self {
            shape,
            displacement: vec![0.0; n],
        }
    }

    /// Same displacement everywhere.
    pub fn constant(shape: GridShape, d: &[f32]) -> Result<Self> {
        if d.len() != shape.ndim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} components", shape.ndim()),
                got: d.len().to_string(),
            });
        }
        let displacement = d.iter().copied().cycle().take(shape.len() * d.len()).collect();
        Ok(Self {
            shape,
            displacement,
        })
    }

    /// Build from a function of voxel coordinates.
    pub fn from_fn(shape: GridShape, f: impl Fn([usize; 3]) -> [f32; 3]) -> Self {
        let d = shape.ndim();
        let mut displacement = Vec::with_capacity(shape.len() * d);
        for i in 0..shape.len() {
            let v = f(shape.coords(i));
            displacement.extend_from_slice(&v[..d]);
        }
        Self {
            shape,
            displacement,
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn displacement(&self) -> &[f32] {
        &self.displacement
    }

    /// Flow multiplied by `alpha`.
    pub fn scaled(&self, alpha: f32) -> Self {
        Self {
            shape: self.shape.clone(),
            displacement: self.displacement.iter().map(|v| v * alpha).collect(),
        }
    }

    /// Multilinearly interpolated displacement at `p`, clamped to the grid.
    pub fn sample(&self, p: &Point) -> Point {
        let d = self.shape.ndim();
        let dims = self.shape.dims();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let hi = (dims[a] - 1) as f64;
            let x = if p[a].is_nan() { 0.0 } else { p[a].clamp(0.0, hi) };
            let f = x.floor();
            let mut b = f as usize;
            let mut t = x - f;
            if b + 1 >= dims[a] {
                // On the last node: degenerate interval.
                b = dims[a] - 1;
                t = 0.0;
            }
            base[a] = b;
            frac[a] = t;
        }
        let mut out = Point::zeros();
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut c = [0usize; 3];
            for a in 0..d {
                let up = (corner >> a) & 1 == 1;
                if up {
                    w *= frac[a];
                    c[a] = (base[a] + 1).min(dims[a] - 1);
                } else {
                    w *= 1.0 - frac[a];
                    c[a] = base[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let idx = self.shape.index(&c[..d]) * d;
            for k in 0..d {
                out[k] += w * f64::from(self.displacement[idx + k]);
            }
        }
        out
    }
}

/// Move each point by the flow sampled at its current position.
pub fn advect_with_flow(flow: &FlowField, points: &[Point]) -> Vec<Point> {
    points.par_iter().map(|p| p + flow.sample(p)).collect()
}

/// Write a complete flow file.
pub fn write_flow_file<I>(path: &Path, shape: &GridShape, frames: I) -> Result<()>
where
    I: ExactSizeIterator<Item = FlowField>,
{
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FLOW_MAGIC)?;
    w.write_all(&[shape.ndim() as u8])?;
    for &s in shape.dims() {
        w.write_all(&u32::try_from(s).map_err(|_| Error::Flow("grid too large".into()))?.to_le_bytes())?;
    }
    w.write_all(&(frames.len() as u32).to_le_bytes())?;
    for frame in frames {
        if frame.shape() != shape {
            return Err(Error::Flow(format!(
                "frame shape {:?} differs from header {:?}",
                frame.shape().dims(),
                shape.dims()
            )));
        }
        for v in frame.displacement() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader over the frames of a flow file.
pub struct FlowReader<R> {
    reader: R,
    shape: GridShape,
    frame_count: usize,
    next: usize,
}

impl FlowReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> FlowReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        reader
            .read_exact(&mut magic)
            .map_err(|_| Error::Flow("truncated header".into()))?;
        if &magic != FLOW_MAGIC {
            return Err(Error::Flow("bad magic, expected SINFLO1".into()));
        }
        let mut b = [0u8; 1];
        reader.read_exact(&mut b).map_err(|_| Error::Flow("truncated header".into()))?;
        let d = b[0] as usize;
        if !(2..=3).contains(&d) {
            return Err(Error::Flow(format!("dimensionality must be 2 or 3, got {d}")));
        }
        let mut dims = Vec::with_capacity(d);
        let mut u = [0u8; 4];
        for _ in 0..d {
            reader.read_exact(&mut u).map_err(|_| Error::Flow("truncated header".into()))?;
            dims.push(u32::from_le_bytes(u) as usize);
        }
        reader.read_exact(&mut u).map_err(|_| Error::Flow("truncated header".into()))?;
        let frame_count = u32::from_le_bytes(u) as usize;
        let shape = GridShape::new(&dims).map_err(|e| Error::Flow(e.to_string()))?;
        Ok(Self {
            reader,
            shape,
            frame_count,
            next: 0,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Next frame, or `None` once all frames were read.
    pub fn next_frame(&mut self) -> Option<Result<FlowField>> {
        if self.next >= self.frame_count {
            return None;
        }
        let n = self.shape.len() * self.shape.ndim();
        let mut bytes = vec![0u8; n * 4];
        if let Err(e) = self.reader.read_exact(&mut bytes) {
            return Some(Err(Error::Flow(format!(
                "truncated data in frame {}: {e}",
                self.next
            ))));
        }
        self.next += 1;
        let displacement = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Some(FlowField::new(self.shape.clone(), displacement))
    }
}

/// Read every frame of a flow file into memory.
pub fn read_flow_file(path: &Path) -> Result<Vec<FlowField>> {
    let mut r = FlowReader::open(path)?;
    let mut out = Vec::with_capacity(r.frame_count());
    while let Some(f) = r.next_frame() {
        out.push(f?);
    }
    Ok(out)
}
