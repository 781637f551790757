//! File formats: binary grid fields, OBJ meshes, PGM/PPM slices and CSV
//! reports.
//!
//! # Grid files
//!
//! Little-endian throughout.
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `ANFD`                             |
//! | 4      | 4    | version `u32` = 1                        |
//! | 8      | 12   | dims `nx ny nz` as `u32`                 |
//! | 20     | 48   | bbox `min xyz, max xyz` as `f64`         |
//! | 68     | 4    | value type `u32`: 0 = `f32`, 1 = `f64`   |
//! | 72     | ...  | values, x fastest, then y, then z        |
//!
//! # Slices
//!
//! Field values are clamped to `[-0.2, 0.2]` and mapped affinely onto gray
//! levels `0..=255`, so `-0.2` is black, `0` is 127.5 rounded to 128 and
//! `0.2` is white. Rows run from the largest in-plane `v` coordinate at the
//! top of the image down to the smallest.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{lattice_point, GridField, ScalarField};
use crate::geom::{Aabb, Vec3};
use crate::mesh::TriangleMesh;
use crate::projection::StageReport;
use crate::render::{RayProfile, TheoremReport};

pub const GRID_MAGIC: &[u8; 4] = b"ANFD";
pub const GRID_VERSION: u32 = 1;
pub const GRID_HEADER_LEN: u64 = 72;

/// Storage precision of grid payload values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueType {
    F32,
    #[default]
    F64,
}

impl ValueType {
    fn tag(self) -> u32 {
        match self {
            ValueType::F32 => 0,
            ValueType::F64 => 1,
        }
    }

    fn size(self) -> u64 {
        match self {
            ValueType::F32 => 4,
            ValueType::F64 => 8,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Writes `grid` to `path`. With [`ValueType::F32`] the values are narrowed.
pub fn write_grid(path: impl AsRef<Path>, grid: &GridField, value_type: ValueType) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(GRID_HEADER_LEN as usize + grid.values().len() * value_type.size() as usize);
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&GRID_VERSION.to_le_bytes());
    for d in grid.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Data(format!("grid dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    let bbox = grid.bbox();
    for v in bbox.min.iter().chain(bbox.max.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&value_type.tag().to_le_bytes());
    match value_type {
        ValueType::F32 => grid
            .values()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
        ValueType::F64 => grid
            .values()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    let mut w = create(path)?;
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Cursor over an in-memory grid file that reports byte offsets on error.
struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let Some(bytes) = self.data.get(self.pos..end) else {
            return Err(Error::Format {
                offset: self.data.len() as u64,
                message: format!("unexpected end of file reading {what}"),
            });
        };
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }

    fn error(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Format {
            offset: at as u64,
            message: message.into(),
        }
    }
}

/// Reads a grid file. `f32` payloads are widened; `f64` payloads are
/// returned bit-for-bit.
pub fn read_grid(path: impl AsRef<Path>) -> Result<(GridField, ValueType)> {
    let path = path.as_ref();
    let mut data = Vec::new();
    open(path)?
        .read_to_end(&mut data)
        .map_err(|e| Error::io(path, e))?;
    parse_grid(&data)
}

pub fn parse_grid(data: &[u8]) -> Result<(GridField, ValueType)> {
    let mut r = ByteReader { data, pos: 0 };
    let magic = r.take::<4>("magic")?;
    if &magic != GRID_MAGIC {
        return Err(r.error(0, format!("bad magic {magic:?}, expected \"ANFD\"")));
    }
    let version = r.u32("version")?;
    if version != GRID_VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for (axis, d) in dims.iter_mut().enumerate() {
        let at = r.pos;
        let v = r.u32("dims")?;
        if v < 2 {
            return Err(r.error(at, format!("dimension {axis} is {v}, need at least 2")));
        }
        *d = v as usize;
    }
    let bbox_at = r.pos;
    let mut corners = [0.0; 6];
    for c in corners.iter_mut() {
        *c = r.f64("bbox")?;
    }
    let bbox = Aabb::new(
        Vec3::new(corners[0], corners[1], corners[2]),
        Vec3::new(corners[3], corners[4], corners[5]),
    )
    .map_err(|e| r.error(bbox_at, format!("invalid bbox: {e}")))?;
    let tag_at = r.pos;
    let value_type = match r.u32("value type")? {
        0 => ValueType::F32,
        1 => ValueType::F64,
        t => return Err(r.error(tag_at, format!("unknown value type tag {t}"))),
    };
    let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    let expected = count
        .and_then(|c| c.checked_mul(value_type.size()))
        .ok_or_else(|| r.error(8, "grid size overflows"))?;
    let actual = (data.len() - r.pos) as u64;
    if actual != expected {
        let offset = GRID_HEADER_LEN + actual.min(expected);
        return Err(r.error(
            offset as usize,
            format!("payload is {actual} bytes, header implies {expected}"),
        ));
    }
    let payload = &data[r.pos..];
    let values: Vec<f64> = match value_type {
        ValueType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ValueType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(r.error(
            (GRID_HEADER_LEN + i as u64 * value_type.size()) as usize,
            "non-finite value in payload",
        ));
    }
    Ok((GridField::new(dims, bbox, values)?, value_type))
}

/// Formats `v` with 9 significant digits.
fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{v:.8e}");
    // normalise e.g. "1.00000000e0" into a form every OBJ reader accepts
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().unwrap_or(0);
            if (-4..9).contains(&exp) {
                let decimals = (8 - exp).max(0) as usize;
                let plain = format!("{v:.decimals$}");
                let plain = if plain.contains('.') {
                    plain.trim_end_matches('0').trim_end_matches('.').to_string()
                } else {
                    plain
                };
                if plain == "-0" { "0".into() } else { plain }
            } else {
                format!("{mantissa}e{exp}")
            }
        }
        None => s,
    }
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", sig9(v.x), sig9(v.y), sig9(v.z));
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(obj_string(mesh).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    parse_obj(BufReader::new(open(path)?)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses `v` and `f` records. Faces with more than three corners are
/// fan-triangulated; `vt`/`vn` references after a slash are ignored, as are
/// comments and other record types.
pub fn parse_obj(reader: impl BufRead) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(Path::new("<obj>"), e))?;
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(parse_err("vertex needs three coordinates".into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(parse_err("non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|e| parse_err(format!("bad face index {t:?}: {e}")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            return Err(parse_err("face index 0 is invalid (indices are 1-based)".into()));
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(parse_err(format!(
                                "face index {i} out of range ({} vertices so far)",
                                vertices.len()
                            )));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(parse_err("face needs at least three indices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Axis-aligned cutting plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePlane {
    /// Normal axis, 0 = x, 1 = y, 2 = z.
    pub axis: usize,
    pub offset: f64,
}

/// Field values sampled on a square lattice over a plane section of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub resolution: usize,
    /// Row-major from the top row, `resolution²` values.
    pub values: Vec<f64>,
}

pub const SLICE_CLAMP: f64 = 0.2;

/// Gray level for a field value under the documented ramp.
pub fn gray_level(v: f64) -> u8 {
    let c = v.clamp(-SLICE_CLAMP, SLICE_CLAMP);
    ((c + SLICE_CLAMP) / (2.0 * SLICE_CLAMP) * 255.0).round() as u8
}

pub fn sample_slice<F: ScalarField + ?Sized>(
    field: &F,
    bbox: &Aabb,
    plane: SlicePlane,
    resolution: usize,
) -> Result<SliceImage> {
    if plane.axis > 2 {
        return Err(Error::Domain(format!("slice axis must be 0, 1 or 2, got {}", plane.axis)));
    }
    if !(plane.offset >= bbox.min[plane.axis] && plane.offset <= bbox.max[plane.axis]) {
        return Err(Error::Domain(format!(
            "slice plane at {} misses the box [{}, {}] on axis {}",
            plane.offset, bbox.min[plane.axis], bbox.max[plane.axis], plane.axis
        )));
    }
    if resolution < 2 {
        return Err(Error::Domain("slice resolution must be >= 2".into()));
    }
    let (u, v) = ((plane.axis + 1) % 3, (plane.axis + 2) % 3);
    let mut values = Vec::with_capacity(resolution * resolution);
    let mut dims = [resolution; 3];
    dims[plane.axis] = 2;
    for row in 0..resolution {
        let j = resolution - 1 - row;
        for i in 0..resolution {
            let mut ijk = [0usize; 3];
            ijk[u] = i;
            ijk[v] = j;
            let mut p = lattice_point(bbox, dims, ijk);
            p[plane.axis] = plane.offset;
            values.push(field.eval(&p));
        }
    }
    Ok(SliceImage { resolution, values })
}

/// Contour segment in pixel coordinates (column, row).
pub type Segment = [(f64, f64); 2];

/// Curves traced by marching squares at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub level: f64,
    pub segments: Vec<Segment>,
    /// Connected curves that close on themselves.
    pub closed_loops: usize,
    /// Curves that end on the image border.
    pub open_curves: usize,
}

impl SliceImage {
    fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.resolution + col]
    }

    pub fn to_gray(&self) -> Vec<u8> {
        self.values.iter().map(|&v| gray_level(v)).collect()
    }

    /// Marching squares at `level`; a sample is inside when below it.
    /// Saddles are resolved with the cell-centre average.
    pub fn contour(&self, level: f64) -> Contour {
        let n = self.resolution;
        // edge ids: horizontal edge (c,r)->(c+1,r) = 2*(r*n+c), vertical (c,r)->(c,r+1) = 2*(r*n+c)+1
        let edge_point = |id: usize| -> (f64, f64) {
            let cell = id / 2;
            let (c, r) = (cell % n, cell / n);
            let (c2, r2) = if id % 2 == 0 { (c + 1, r) } else { (c, r + 1) };
            let (a, b) = (self.at(c, r) - level, self.at(c2, r2) - level);
            let t = if a == b { 0.5 } else { (a / (a - b)).clamp(0.0, 1.0) };
            (c as f64 + t * (c2 as f64 - c as f64), r as f64 + t * (r2 as f64 - r as f64))
        };
        let mut links: Vec<(usize, usize)> = Vec::new();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let corners = [(c, r), (c + 1, r), (c + 1, r + 1), (c, r + 1)];
                let vals = corners.map(|(cc, rr)| self.at(cc, rr));
                let mut case = 0;
                for (k, v) in vals.iter().enumerate() {
                    if *v < level {
                        case |= 1 << k;
                    }
                }
                let top = 2 * (r * n + c);
                let bottom = 2 * ((r + 1) * n + c);
                let left = 2 * (r * n + c) + 1;
                let right = 2 * (r * n + c + 1) + 1;
                let centre_inside = vals.iter().sum::<f64>() / 4.0 < level;
                let pairs: &[(usize, usize)] = match case {
                    0 | 15 => &[],
                    1 | 14 => &[(top, left)],
                    2 | 13 => &[(top, right)],
                    4 | 11 => &[(right, bottom)],
                    8 | 7 => &[(left, bottom)],
                    3 | 12 => &[(left, right)],
                    6 | 9 => &[(top, bottom)],
                    5 => {
                        if centre_inside {
                            &[(top, right), (left, bottom)]
                        } else {
                            &[(top, left), (right, bottom)]
                        }
                    }
                    10 => {
                        if centre_inside {
                            &[(top, left), (right, bottom)]
                        } else {
                            &[(top, right), (left, bottom)]
                        }
                    }
                    _ => unreachable!(),
                };
                links.extend_from_slice(pairs);
            }
        }
        let segments = links
            .iter()
            .map(|&(a, b)| [edge_point(a), edge_point(b)])
            .collect();
        let (closed_loops, open_curves) = count_curves(&links);
        Contour {
            level,
            segments,
            closed_loops,
            open_curves,
        }
    }
}

fn count_curves(links: &[(usize, usize)]) -> (usize, usize) {
    let mut ids: Vec<usize> = links.iter().flat_map(|&(a, b)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let slot = |id: usize| ids.binary_search(&id).expect("id present");
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    let mut degree = vec![0usize; ids.len()];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in links {
        let (a, b) = (slot(a), slot(b));
        degree[a] += 1;
        degree[b] += 1;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut open_root = vec![false; ids.len()];
    for i in 0..ids.len() {
        if degree[i] != 2 {
            let r = find(&mut parent, i);
            open_root[r] = true;
        }
    }
    let (mut closed, mut open) = (0, 0);
    for i in 0..ids.len() {
        if find(&mut parent, i) == i {
            if open_root[i] {
                open += 1;
            } else {
                closed += 1;
            }
        }
    }
    (closed, open)
}

/// Overlay colours, cycled by iso index.
pub const OVERLAY_COLORS: [[u8; 3]; 4] = [[255, 255, 255], [255, 140, 0], [0, 200, 255], [220, 0, 220]];

/// Binary PGM (P5).
pub fn pgm_bytes(image: &SliceImage) -> Vec<u8> {
    let n = image.resolution;
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(image.to_gray());
    out
}

/// Binary PPM (P6) with each contour drawn in its overlay colour.
pub fn ppm_bytes(image: &SliceImage, contours: &[Contour]) -> Vec<u8> {
    let n = image.resolution;
    let mut rgb: Vec<[u8; 3]> = image.to_gray().into_iter().map(|g| [g; 3]).collect();
    for (k, contour) in contours.iter().enumerate() {
        let color = OVERLAY_COLORS[k % OVERLAY_COLORS.len()];
        for [(x0, y0), (x1, y1)] in &contour.segments {
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let x = (x0 + t * (x1 - x0)).round() as usize;
                let y = (y0 + t * (y1 - y0)).round() as usize;
                rgb[y.min(n - 1) * n + x.min(n - 1)] = color;
            }
        }
    }
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    out.extend(rgb.into_iter().flatten());
    out
}

/// Result of [`write_slice`].
#[derive(Debug, Clone)]
pub struct SliceOutput {
    pub image: SliceImage,
    pub contours: Vec<Contour>,
}

/// Samples a slice, writes the grayscale PGM to `pgm_path` and, if given,
/// the contour overlay PPM to `ppm_path`.
pub fn write_slice<F: ScalarField + ?Sized>(
    field: &F,
    bbox: &Aabb,
    plane: SlicePlane,
    resolution: usize,
    iso_overlays: &[f64],
    pgm_path: impl AsRef<Path>,
    ppm_path: Option<&Path>,
) -> Result<SliceOutput> {
    let image = sample_slice(field, bbox, plane, resolution)?;
    let contours: Vec<Contour> = iso_overlays.iter().map(|&l| image.contour(l)).collect();
    write_bytes(pgm_path.as_ref(), &pgm_bytes(&image))?;
    if let Some(p) = ppm_path {
        write_bytes(p, &ppm_bytes(&image, &contours))?;
    }
    Ok(SliceOutput { image, contours })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes `header` then one line per row; floats use shortest round-trip
/// formatting.
pub fn write_csv<R: AsRef<[String]>>(path: impl AsRef<Path>, header: &[&str], rows: &[R]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.as_ref().join(","));
        out.push('\n');
    }
    write_bytes(path.as_ref(), out.as_bytes())
}

pub fn write_profile_csv(path: impl AsRef<Path>, profile: &RayProfile) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..profile.len())
        .map(|i| {
            vec![
                profile.ts[i].to_string(),
                profile.f[i].to_string(),
                profile.sigma[i].to_string(),
                profile.transmittance[i].to_string(),
                profile.weights[i].to_string(),
            ]
        })
        .collect();
    write_csv(path, &["t", "f", "sigma", "T", "w"], &rows)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, reports: &[TheoremReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.sharpness.to_string(),
                r.d0.to_string(),
                r.local_min.to_string(),
                r.step.to_string(),
                r.alpha_quad.to_string(),
                r.alpha_closed.to_string(),
                r.t_star.to_string(),
                r.t_expected.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        &["s", "d0", "m", "step", "alpha_quad", "alpha_closed", "t_star", "t_expected", "pass"],
        &rows,
    )
}

/// Loss history of both stages. Stage 1 regularizer is the Laplacian term,
/// stage 2 the tangential penalty.
pub fn write_loss_csv(path: impl AsRef<Path>, stage1: &StageReport, stage2: Option<&StageReport>) -> Result<()> {
    let mut rows = Vec::new();
    let stages = [(1, Some(stage1)), (2, stage2)];
    for (stage, report) in stages {
        let Some(report) = report else { continue };
        for (epoch, l) in report.history.iter().enumerate() {
            rows.push(vec![
                stage.to_string(),
                epoch.to_string(),
                l.field.to_string(),
                l.regularizer.to_string(),
                l.total.to_string(),
            ]);
        }
    }
    write_csv(path, &["stage", "epoch", "field_term", "regularizer", "total"], &rows)
}

pub fn write_completeness_csv(path: impl AsRef<Path>, curve: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|(t, f)| vec![t.to_string(), f.to_string()])
        .collect();
    write_csv(path, &["threshold", "completeness"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{absolute_field, bake_grid, ConstantField, Primitive};

    #[test]
    fn sig9_formats() {
        assert_eq!(sig9(0.5), "0.5");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789.0), "123456789");
        assert_eq!(sig9(1.5e-7), "1.50000000e-7");
        assert_eq!("1.50000000e-7".parse::<f64>().unwrap(), 1.5e-7);
    }

    #[test]
    fn one_triangle_obj() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let s = obj_string(&m);
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 1);
        assert!(s.contains("f 1 2 3"));
        assert_eq!(parse_obj(s.as_bytes()).unwrap(), m);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let bad = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
        match parse_obj(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bad = "# c\nv 0 0 zero\n";
        assert!(matches!(parse_obj(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "v 0 0 0\nf 1 2 3\n";
        assert!(matches!(parse_obj(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn f32_grid_round_trips_narrowed_values() {
        let g = bake_grid(&Primitive::sphere(Vec3::zeros(), 0.5).unwrap(), Aabb::cube(1.0), [5, 4, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.anfd");
        write_grid(&p, &g, ValueType::F32).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), GRID_HEADER_LEN + 60 * 4);
        let (back, vt) = read_grid(&p).unwrap();
        assert_eq!(vt, ValueType::F32);
        assert_eq!(back.dims(), g.dims());
        assert_eq!(back.bbox(), g.bbox());
        for (a, b) in g.values().iter().zip(back.values()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn grid_parse_errors_are_positioned() {
        let g = bake_grid(&Primitive::sphere(Vec3::zeros(), 0.5).unwrap(), Aabb::cube(1.0), [4, 4, 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.anfd");
        write_grid(&p, &g, ValueType::F64).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len() as u64, GRID_HEADER_LEN + 64 * 8);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_grid(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(parse_grid(&bad), Err(Error::Format { offset: 4, .. })));
        let mut bad = bytes.clone();
        bad[68] = 7;
        assert!(matches!(parse_grid(&bad), Err(Error::Format { offset: 68, .. })));
        match parse_grid(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 3),
            other => panic!("{other:?}"),
        }
        match parse_grid(&bytes[..30]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 30),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_slice_is_uniform() {
        let img = sample_slice(&ConstantField(0.05), &Aabb::cube(1.0), SlicePlane { axis: 2, offset: 0.0 }, 16).unwrap();
        let g = img.to_gray();
        assert!(g.iter().all(|&v| v == g[0]));
        assert_eq!(gray_level(-1.0), 0);
        assert_eq!(gray_level(0.2), 255);
        assert_eq!(gray_level(0.0), 128);
        assert!(sample_slice(&ConstantField(0.0), &Aabb::cube(1.0), SlicePlane { axis: 0, offset: 1.5 }, 16).is_err());
    }

    #[test]
    fn sphere_envelope_slice_has_ring_pair() {
        let field = absolute_field(Primitive::sphere(Vec3::zeros(), 0.5).unwrap());
        let img = sample_slice(&field, &Aabb::cube(1.0), SlicePlane { axis: 2, offset: 0.0 }, 512).unwrap();
        let c = img.contour(0.005);
        assert_eq!((c.closed_loops, c.open_curves), (2, 0));
        let ppm = ppm_bytes(&img, &[c]);
        assert_eq!(ppm.len(), "P6\n512 512\n255\n".len() + 512 * 512 * 3);
    }
}
