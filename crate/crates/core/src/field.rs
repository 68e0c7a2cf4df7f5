//! Sphere-valued fields on a grid, their binary file format, and
//! multilinear sampling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, MAX_DIM, MIN_DIM};

pub const MAGIC: &[u8; 4] = b"BHF1";

/// Tolerance on `| |v| - 1 |` accepted by [`load_field`] (values are renormalized).
pub const LOAD_TOLERANCE: f64 = 1e-6;
/// Tolerance on `| |v| - 1 |` required of every stored value.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Discretized map `f: Ω → S^n ⊂ ℝ^{n+1}`, one unit vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereField {
    domain: GridDomain,
    target_dim: usize,
    values: Vec<f64>,
}

impl SphereField {
    pub fn new(domain: GridDomain, target_dim: usize, values: Vec<f64>) -> Result<Self> {
        if target_dim < 1 {
            return Err(Error::InvalidParameter("target dimension must be at least 1".into()));
        }
        let comps = target_dim + 1;
        if values.len() != domain.node_count() * comps {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                domain.node_count() * comps,
                values.len()
            )));
        }
        for (node, v) in values.chunks_exact(comps).enumerate() {
            let norm = norm(v);
            if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::OffSphere { node, norm });
            }
        }
        Ok(Self { domain, target_dim, values })
    }

    /// Samples `f` at every node and normalizes the result.
    pub fn from_fn(
        domain: GridDomain,
        target_dim: usize,
        mut f: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    ) -> Result<Self> {
        let comps = target_dim + 1;
        let mut values = vec![0.0; domain.node_count() * comps];
        let mut pos = vec![0.0; domain.dim()];
        let full = domain.interior_box(0).expect("grid has nodes");
        let mut status = Ok(());
        full.for_each(&domain, |idx, lin| {
            if status.is_err() {
                return;
            }
            for (a, &i) in idx.iter().enumerate() {
                pos[a] = domain.coord(a, i);
            }
            let out = &mut values[lin * comps..(lin + 1) * comps];
            if let Err(e) = f(&pos, out) {
                status = Err(e);
                return;
            }
            normalize(out);
        });
        status?;
        Self::new(domain, target_dim, values)
    }

    /// Constant field.
    pub fn constant(domain: GridDomain, c: &[f64]) -> Result<Self> {
        let mut unit = c.to_vec();
        if normalize(&mut unit) == 0.0 {
            return Err(Error::InvalidParameter("constant value must be nonzero".into()));
        }
        let values = unit.iter().copied().cycle().take(domain.node_count() * unit.len()).collect();
        Self::new(domain, c.len() - 1, values)
    }

    pub(crate) fn from_raw(domain: GridDomain, target_dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.node_count() * (target_dim + 1));
        Self { domain, target_dim, values }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    /// Ambient components per node, `n + 1`.
    pub fn comps(&self) -> usize {
        self.target_dim + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, lin: usize) -> &[f64] {
        let c = self.comps();
        &self.values[lin * c..(lin + 1) * c]
    }

    /// Applies an ambient linear map (e.g. a rotation of ℝ^{n+1}) to every value.
    pub fn map_values(&self, matrix: &[Vec<f64>]) -> Result<Self> {
        let c = self.comps();
        let mut values = Vec::with_capacity(self.values.len());
        for v in self.values.chunks_exact(c) {
            for row in matrix {
                values.push(row.iter().zip(v).map(|(a, b)| a * b).sum());
            }
        }
        Self::new(self.domain.clone(), self.target_dim, values)
    }

    /// Multilinear interpolation of the ambient values at `x`; with `renorm`
    /// the result is projected back to the sphere when nonzero.
    pub fn sample(&self, x: &[f64], renorm: bool) -> Result<Vec<f64>> {
        if !self.domain.contains_point(x) {
            return Err(Error::Geometry(format!("sample point {x:?} outside the domain box")));
        }
        let mut out = vec![0.0; self.comps()];
        self.sample_into(x, &mut out);
        if renorm {
            normalize(&mut out);
        }
        Ok(out)
    }

    /// Unchecked multilinear interpolation; `x` must lie in the box.
    pub fn sample_into(&self, x: &[f64], out: &mut [f64]) {
        let d = &self.domain;
        let m = d.dim();
        let n = d.nodes_per_axis();
        let h = d.spacing();
        let comps = self.comps();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..m {
            let t = ((x[a] - d.lower(a)) / h).clamp(0.0, (n - 1) as f64);
            let i0 = (t.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = t - i0 as f64;
        }
        let mut strides = [0usize; MAX_DIM];
        let mut st = 1;
        for a in (0..m).rev() {
            strides[a] = st;
            st *= n;
        }
        // corner weights and offsets, built one axis at a time
        let mut w = [0.0f64; 1 << MAX_DIM];
        let mut off = [0usize; 1 << MAX_DIM];
        w[0] = 1.0;
        off[0] = (0..m).map(|a| base[a] * strides[a]).sum::<usize>();
        let mut len = 1;
        for a in 0..m {
            for c in 0..len {
                w[len + c] = w[c] * frac[a];
                off[len + c] = off[c] + strides[a];
                w[c] *= 1.0 - frac[a];
            }
            len *= 2;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for c in 0..len {
            if w[c] == 0.0 {
                continue;
            }
            let v = &self.values[off[c] * comps..(off[c] + 1) * comps];
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w[c] * vi;
            }
        }
    }
}

/// Scalar samples on a grid, one per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub domain: GridDomain,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::InvalidParameter("scalar field length mismatch".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: GridDomain, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.node_count()).map(|lin| f(&domain.position(lin))).collect();
        Self { domain, values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Normalizes in place; returns the original norm. Zero vectors are left as is.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub fn save_field(field: &SphereField, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = field.domain();
    w.write_all(MAGIC)?;
    w.write_all(&(d.dim() as u32).to_le_bytes())?;
    w.write_all(&(field.target_dim() as u32).to_le_bytes())?;
    w.write_all(&(d.nodes_per_axis() as u32).to_le_bytes())?;
    for o in d.origin() {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&d.half_width().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Size in bytes of a saved field.
pub fn file_size(dim: usize, target_dim: usize, nodes_per_axis: usize) -> usize {
    4 + 12 + 8 * dim + 8 + 8 * (target_dim + 1) * nodes_per_axis.pow(dim as u32)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<SphereField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {magic:?}")));
    }
    let m = read_u32(&mut r, "m")? as usize;
    let n = read_u32(&mut r, "n")? as usize;
    let nodes = read_u32(&mut r, "nodes_per_axis")? as usize;
    if !(MIN_DIM..=MAX_DIM).contains(&m) {
        return Err(Error::UnsupportedDimension(m));
    }
    if !(1..=64).contains(&n) {
        return Err(Error::MalformedHeader(format!("target dimension {n} out of range")));
    }
    let mut origin = Vec::with_capacity(m);
    for _ in 0..m {
        origin.push(read_f64(&mut r, "origin")?);
    }
    let half_width = read_f64(&mut r, "half_width")?;
    let domain = GridDomain::new(m, nodes, origin, half_width).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let count = domain.node_count() * (n + 1);
    let mut bytes = vec![0u8; count * 8];
    read_exact(&mut r, &mut bytes, "values")?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::MalformedHeader("trailing bytes after values".into()));
    }
    let mut values: Vec<f64> =
        bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
    for (node, v) in values.chunks_exact_mut(n + 1).enumerate() {
        let len = norm(v);
        if !((len - 1.0).abs() <= LOAD_TOLERANCE) {
            return Err(Error::OffSphere { node, norm: len });
        }
        // values already unit to working precision are kept bit-for-bit
        if (len - 1.0).abs() > 1e-12 {
            v.iter_mut().for_each(|x| *x /= len);
        }
    }
    SphereField::new(domain, n, values)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::MalformedHeader(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swirl(m: usize, nodes: usize) -> SphereField {
        let d = GridDomain::centered(m, nodes, 1.0).unwrap();
        SphereField::from_fn(d, 2, |x, out| {
            out[0] = (2.0 * x[0]).cos();
            out[1] = (2.0 * x[0]).sin() * (x[1] + 0.3).cos();
            out[2] = (x[1] + 0.3).sin() + 0.1 * x[m - 1];
            Ok(())
        })
        .unwrap()
    }

    #[test]
    fn save_load_bitwise() {
        let f = swirl(3, 9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bhf");
        save_field(&f, &p).unwrap();
        let g = load_field(&p).unwrap();
        assert_eq!(f.domain(), g.domain());
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn constant_file_size() {
        let d = GridDomain::centered(2, 10, 1.0).unwrap();
        let f = SphereField::constant(d, &[0.0, 0.0, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bhf");
        save_field(&f, &p).unwrap();
        let len = std::fs::metadata(&p).unwrap().len() as usize;
        let header = 4 + 12 + 8 * 2 + 8;
        assert_eq!(len, header + 8 * 3 * 100);
        assert_eq!(len, file_size(2, 2, 10));
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let d = GridDomain::centered(2, 8, 1.0).unwrap();
        let f = SphereField::constant(d, &[1.0, 0.0]).unwrap();
        let err = save_field(&f, "/nonexistent-dir/sub/f.bhf").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    fn write_raw(path: &Path, m: u32, n: u32, nodes: u32, value: impl Fn(usize) -> Vec<f64>) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        for v in [m, n, nodes] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for _ in 0..m {
            bytes.extend_from_slice(&0.0f64.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        for node in 0..(nodes as usize).pow(m) {
            for c in value(node) {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn rejects_unsupported_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m7.bhf");
        let mut bytes = MAGIC.to_vec();
        for v in [7u32, 1, 8] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let err = load_field(&p).unwrap_err();
        assert!(err.to_string().contains("unsupported dimension"), "{err}");
    }

    #[test]
    fn rejects_off_sphere_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("off.bhf");
        write_raw(&p, 2, 1, 8, |node| if node == 5 { vec![0.9, 0.0] } else { vec![1.0, 0.0] });
        let err = load_field(&p).unwrap_err();
        assert!(matches!(err, Error::OffSphere { node: 5, .. }));
        assert!(err.to_string().contains("off-sphere value"));
    }

    #[test]
    fn renormalizes_near_unit_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("near.bhf");
        write_raw(&p, 2, 1, 8, |_| vec![1.0 + 5e-7, 0.0]);
        let f = load_field(&p).unwrap();
        assert_eq!(f.value(3), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bhf");
        std::fs::write(&p, b"XXXX").unwrap();
        assert!(matches!(load_field(&p), Err(Error::MalformedHeader(_))));
        write_raw(&p, 2, 1, 8, |_| vec![1.0, 0.0]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_field(&p), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn sample_exact_at_nodes() {
        let f = swirl(3, 9);
        for lin in [0, 17, 400, f.domain().node_count() - 1] {
            let x = f.domain().position(lin);
            let v = f.sample(&x, false).unwrap();
            for (a, b) in v.iter().zip(f.value(lin)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sample_reproduces_constants() {
        let d = GridDomain::centered(4, 8, 1.0).unwrap();
        let c = [0.6, 0.0, 0.8];
        let f = SphereField::constant(d, &c).unwrap();
        for x in [[0.1, -0.33, 0.7, 0.05], [-1.0, 1.0, 0.999, -0.5]] {
            let v = f.sample(&x, false).unwrap();
            for (a, b) in v.iter().zip(&c) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sample_outside_box_fails() {
        let f = swirl(2, 8);
        assert!(matches!(f.sample(&[1.5, 0.0], true), Err(Error::Geometry(_))));
    }
}
