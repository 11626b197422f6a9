//! File formats: track CSV, raw 16-bit frames with a sidecar, PGM previews,
//! mask images and run manifests.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{TrackId, TrackSet};
use crate::shape::GridShape;
use crate::Point;

const FRAME_COUNT_KEY: &str = "# frame_count=";
const AXES: [&str; 3] = ["x", "y", "z"];

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Ground-truth CSV header for `dim`.
pub fn ground_truth_header(dim: usize) -> Vec<String> {
    let mut h = vec!["frame".to_string(), "track_id".to_string()];
    h.extend(AXES[..dim].iter().map(|a| a.to_string()));
    h.push("weight".into());
    h.extend(AXES[..dim].iter().map(|a| format!("s{a}")));
    if dim == 2 {
        h.push("theta".into());
    } else {
        h.extend(AXES.iter().map(|a| format!("theta_{a}")));
    }
    h
}

/// Streaming writer for ground-truth rows. Rows must arrive with frames
/// ascending and ids ascending within a frame.
pub struct TrackCsvWriter {
    out: BufWriter<File>,
    dim: usize,
    last: Option<(usize, TrackId)>,
}

impl TrackCsvWriter {
    pub fn create(path: &Path, dim: usize, frame_count: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{FRAME_COUNT_KEY}{frame_count}")?;
        writeln!(out, "{}", ground_truth_header(dim).join(","))?;
        Ok(Self {
            out,
            dim,
            last: None,
        })
    }

    pub fn write_row(
        &mut self,
        frame: usize,
        id: TrackId,
        position: &Point,
        weight: f64,
        sizes: &[f64],
        angles: &[f64],
    ) -> Result<()> {
        if let Some(prev) = self.last {
            if (frame, id) <= prev {
                return Err(Error::param(format!(
                    "rows out of order: ({frame}, {id}) after {prev:?}"
                )));
            }
        }
        self.last = Some((frame, id));
        let mut line = format!("{frame},{id}");
        for a in 0..self.dim {
            let _ = write!(line, ",{:.6}", position[a]);
        }
        let _ = write!(line, ",{weight:.6}");
        for s in sizes {
            let _ = write!(line, ",{s:.6}");
        }
        for t in angles {
            let _ = write!(line, ",{t:.6}");
        }
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Write positions only (`frame,track_id,x,y[,z]`).
pub fn write_tracks(path: &Path, tracks: &TrackSet, dim: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{FRAME_COUNT_KEY}{}", tracks.frame_count())?;
    let mut header = vec!["frame", "track_id"];
    header.extend(&AXES[..dim]);
    writeln!(out, "{}", header.join(","))?;
    for (frame, (ids, pts)) in tracks.by_frame().iter().enumerate() {
        for (id, p) in ids.iter().zip(pts) {
            write!(out, "{frame},{id}")?;
            for a in 0..dim {
                write!(out, ",{:.6}", p[a])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a track CSV. Extra columns are ignored. The frame count comes from a
/// leading `# frame_count=T` line when present, otherwise `max frame + 1`.
pub fn read_tracks(path: &Path) -> Result<(TrackSet, usize)> {
    let text = std::fs::read_to_string(path)?;
    let mut declared = None;
    let mut offset = 0u64;
    let mut body = text.as_str();
    if let Some(first) = text.lines().next() {
        if let Some(v) = first.strip_prefix(FRAME_COUNT_KEY) {
            declared = Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(path, 1, format!("bad frame count: {e}")))?,
            );
            offset = 1;
            body = text[first.len()..].trim_start_matches(['\r', '\n']);
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, offset + 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (fcol, icol) = match (col("frame"), col("track_id")) {
        (Some(f), Some(i)) => (f, i),
        _ => return Err(parse_err(path, offset + 1, "header needs frame and track_id columns")),
    };
    let xcols: Vec<usize> = AXES.iter().map_while(|a| col(a)).collect();
    let dim = xcols.len();
    if !(2..=3).contains(&dim) {
        return Err(parse_err(path, offset + 1, "header needs x,y[,z] columns"));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, offset + line, e.to_string())
        })?;
        let line = offset + record.position().map_or(0, |p| p.line());
        let field = |c: usize| {
            record
                .get(c)
                .ok_or_else(|| parse_err(path, line, format!("missing column {}", headers.get(c).unwrap_or("?"))))
        };
        let frame: usize = field(fcol)?
            .parse()
            .map_err(|e| parse_err(path, line, format!("frame: {e}")))?;
        let id: TrackId = field(icol)?
            .parse()
            .map_err(|e| parse_err(path, line, format!("track_id: {e}")))?;
        let mut p = Point::zeros();
        for (a, &c) in xcols.iter().enumerate() {
            p[a] = field(c)?
                .parse()
                .map_err(|e| parse_err(path, line, format!("{}: {e}", AXES[a])))?;
            if !p[a].is_finite() {
                return Err(parse_err(path, line, "non-finite coordinate"));
            }
        }
        rows.push((line, frame, id, p));
    }
    let frame_count = declared.unwrap_or_else(|| rows.iter().map(|r| r.1 + 1).max().unwrap_or(0));
    let mut tracks = TrackSet::new(frame_count);
    for (line, frame, id, p) in rows {
        tracks
            .insert(id, frame, p)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
    }
    Ok((tracks, dim))
}

/// Writes one raw little-endian `u16` file per frame plus an `images.txt`
/// sidecar describing the stack.
pub struct FrameWriter {
    dir: PathBuf,
    shape: GridShape,
    pgm: bool,
    written: usize,
}

impl FrameWriter {
    pub fn new(dir: &Path, shape: GridShape, pgm: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            shape,
            pgm,
            written: 0,
        })
    }

    pub fn frame_path(dir: &Path, frame: usize) -> PathBuf {
        dir.join(format!("frame_{frame:05}.raw"))
    }

    pub fn write_frame(&mut self, frame: usize, data: &[u16]) -> Result<()> {
        if data.len() != self.shape.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} voxels", self.shape.len()),
                got: data.len().to_string(),
            });
        }
        let mut bytes = Vec::with_capacity(data.len() * 2);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(Self::frame_path(&self.dir, frame), bytes)?;
        if self.pgm && self.shape.ndim() == 2 {
            write_pgm16(
                &self.dir.join(format!("frame_{frame:05}.pgm")),
                self.shape.dims()[0],
                self.shape.dims()[1],
                data,
            )?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let dims: Vec<String> = self.shape.dims().iter().map(|d| d.to_string()).collect();
        let text = format!(
            "dims={}\nframes={}\nbit_depth=16\nendianness=little\nlayout=x-fastest\npattern=frame_%05d.raw\n",
            dims.join(" "),
            self.written
        );
        std::fs::write(self.dir.join("images.txt"), text)?;
        Ok(())
    }
}

/// Binary PGM (P5) with 16-bit samples (big-endian, as PGM requires).
pub fn write_pgm16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for v in data {
        out.write_all(&v.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Stack description parsed from an `images.txt` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct StackInfo {
    pub shape: GridShape,
    pub frames: usize,
}

pub fn read_sidecar(path: &Path) -> Result<StackInfo> {
    let text = std::fs::read_to_string(path)?;
    let mut dims = None;
    let mut frames = None;
    for (n, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        match k.trim() {
            "dims" => {
                let d: std::result::Result<Vec<usize>, _> = v.split_whitespace().map(str::parse).collect();
                dims = Some(d.map_err(|e| parse_err(path, n as u64 + 1, format!("dims: {e}")))?);
            }
            "frames" => {
                frames = Some(
                    v.trim()
                        .parse()
                        .map_err(|e| parse_err(path, n as u64 + 1, format!("frames: {e}")))?,
                )
            }
            "bit_depth" if v.trim() != "16" => {
                return Err(parse_err(path, n as u64 + 1, "only 16-bit stacks are supported"))
            }
            _ => {}
        }
    }
    let dims = dims.ok_or_else(|| parse_err(path, 0, "missing dims"))?;
    Ok(StackInfo {
        shape: GridShape::new(&dims)?,
        frames: frames.ok_or_else(|| parse_err(path, 0, "missing frames"))?,
    })
}

/// Read frame `frame` of a raw stack described by `sidecar`.
pub fn read_raw_frame(sidecar: &Path, frame: usize) -> Result<(GridShape, Vec<u16>)> {
    let info = read_sidecar(sidecar)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let bytes = std::fs::read(FrameWriter::frame_path(dir, frame))?;
    if bytes.len() != info.shape.len() * 2 {
        return Err(Error::DimensionMismatch {
            expected: format!("{} bytes", info.shape.len() * 2),
            got: bytes.len().to_string(),
        });
    }
    let data = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    Ok((info.shape, data))
}

/// Load a grayscale image for mask thresholding. 2D images (PNG, PGM, TIFF;
/// 8 or 16 bit) keep their native gray levels; an `images.txt` sidecar loads
/// the first frame of a raw stack (2D or 3D).
pub fn load_gray_image(path: &Path) -> Result<(GridShape, Vec<f64>)> {
    if path.file_name().is_some_and(|n| n == "images.txt") {
        let (shape, data) = read_raw_frame(path, 0)?;
        return Ok((shape, data.into_iter().map(f64::from).collect()));
    }
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f64::from).collect(),
        image::DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f64::from).collect(),
        other => other.into_luma16().into_raw().into_iter().map(f64::from).collect(),
    };
    Ok((GridShape::new(&[w, h])?, values))
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
