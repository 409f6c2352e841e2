//! Binary container for a [`CorrectorSet`].
//!
//! Layout:
//!
//! ```text
//! b"CORRSET1"                 8 bytes
//! manifest length n           u64 little endian
//! manifest                    n bytes of UTF-8 JSON (see `Manifest`)
//! blocks                      in manifest order
//! ```
//!
//! A `c64` block stores `(re, im)` pairs of little-endian `f64`; an `f64`
//! block stores plain little-endian `f64`. Spectral blocks hold `count`
//! fields, each component-major with `len` coefficients per component in the
//! lattice's lexicographic mode order. The blocks are `medium`, then for each
//! order `n` the fields `phi`, `sigma`, `q` (`n ≥ 1`) and the real tensor
//! `abar` (`n ≥ 1`, parent-major `d×d` row-major matrices).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use symlab_core::cell::CoefficientField;
use symlab_core::correctors::CorrectorSet;
use symlab_core::fourier::{FrequencyLattice, Rank, SpectralField};
use symlab_core::C64;

use crate::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"CORRSET1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dim: usize,
    pub modes: usize,
    pub grid: usize,
    pub order: usize,
    pub lambda: f64,
    pub medium: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub order: usize,
    /// Number of fields (or matrices for `abar`).
    pub count: usize,
    pub components: usize,
    /// Coefficients per component.
    pub len: usize,
    pub dtype: String,
}

impl Block {
    fn values(&self) -> usize {
        self.count * self.components * self.len
    }

    fn bytes(&self) -> usize {
        self.values() * if self.dtype == "c64" { 16 } else { 8 }
    }
}

fn put_fields(body: &mut Vec<u8>, blocks: &mut Vec<Block>, name: &str, order: usize, fields: &[SpectralField], rank: Rank) {
    let (d, len) = fields.first().map_or((1, 0), |f| (f.lattice().dim(), f.lattice().len()));
    blocks.push(Block {
        name: name.into(),
        order,
        count: fields.len(),
        components: rank.components(d),
        len,
        dtype: "c64".into(),
    });
    for c in fields.iter().flat_map(|f| f.coefficients()) {
        body.extend_from_slice(&c.re.to_le_bytes());
        body.extend_from_slice(&c.im.to_le_bytes());
    }
}

/// Serialize `set` into the container format.
pub fn encode(set: &CorrectorSet, medium_name: &str) -> Result<Vec<u8>> {
    let a = set.medium();
    let l = a.lattice();
    let d = l.dim();
    let mut blocks = Vec::new();
    let mut body = Vec::new();
    put_fields(&mut body, &mut blocks, "medium", 0, std::slice::from_ref(a.field()), Rank::Matrix);
    for n in 0..=set.order() {
        put_fields(&mut body, &mut blocks, "phi", n, set.phi_all(n)?, Rank::Scalar);
        put_fields(&mut body, &mut blocks, "sigma", n, set.sigma_all(n)?, Rank::Matrix);
        if n >= 1 {
            put_fields(&mut body, &mut blocks, "q", n, set.q_all(n)?, Rank::Vector);
            let t = set.homogenized_tensor(n)?;
            blocks.push(Block {
                name: "abar".into(),
                order: n,
                count: t.len() / (d * d),
                components: d * d,
                len: 1,
                dtype: "f64".into(),
            });
            for x in t {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dim: d,
        modes: l.modes(),
        grid: l.grid(),
        order: set.order(),
        lambda: a.lambda(),
        medium: medium_name.into(),
        blocks,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    let mut file = Vec::with_capacity(16 + json.len() + body.len());
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&(json.len() as u64).to_le_bytes());
    file.extend_from_slice(&json);
    file.extend_from_slice(&body);
    Ok(file)
}

fn corrupt(msg: impl Into<String>) -> LabError {
    LabError::Container(msg.into())
}

/// Parse a container; returns the set and its manifest.
pub fn decode(bytes: &[u8]) -> Result<(CorrectorSet, Manifest)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing CORRSET1 header"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16usize.saturating_add(n)).ok_or_else(|| corrupt("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {}", manifest.format_version)));
    }
    let lattice = FrequencyLattice::new(manifest.dim, manifest.modes, manifest.grid)?;
    let d = manifest.dim;
    let mut pos = 16 + n;
    let mut take = |b: &Block| -> Result<&[u8]> {
        let end = pos + b.bytes();
        let s = bytes.get(pos..end).ok_or_else(|| corrupt(format!("truncated block {} (order {})", b.name, b.order)))?;
        pos = end;
        Ok(s)
    };
    let read_fields = |raw: &[u8], b: &Block, rank: Rank| -> Result<Vec<SpectralField>> {
        if b.components != rank.components(d) || b.len != lattice.len() || b.dtype != "c64" {
            return Err(corrupt(format!("block {} (order {}) has the wrong shape", b.name, b.order)));
        }
        let vals: Vec<C64> = raw
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        vals.chunks(b.components * b.len)
            .map(|chunk| SpectralField::from_coefficients(&lattice, rank, chunk.to_vec()).map_err(LabError::from))
            .collect()
    };
    let (mut phi, mut sigma, mut q, mut abar) = (Vec::new(), Vec::new(), vec![Vec::new()], vec![Vec::new()]);
    let mut medium = None;
    for b in &manifest.blocks {
        let raw = take(b)?;
        match b.name.as_str() {
            "medium" => medium = read_fields(raw, b, Rank::Matrix)?.pop(),
            "phi" => phi.push(read_fields(raw, b, Rank::Scalar)?),
            "sigma" => sigma.push(read_fields(raw, b, Rank::Matrix)?),
            "q" => q.push(read_fields(raw, b, Rank::Vector)?),
            "abar" => {
                if b.dtype != "f64" || b.components != d * d {
                    return Err(corrupt("abar block has the wrong shape"));
                }
                abar.push(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                );
            }
            other => return Err(corrupt(format!("unknown block `{other}`"))),
        }
    }
    if pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let medium = medium.ok_or_else(|| corrupt("missing medium block"))?;
    let medium = CoefficientField::from_field(medium)?;
    let set = CorrectorSet::from_parts(medium, phi, sigma, q, abar)?;
    if set.order() != manifest.order {
        return Err(corrupt("order in manifest does not match the blocks"));
    }
    Ok((set, manifest))
}

pub fn write(path: &Path, set: &CorrectorSet, medium_name: &str) -> Result<()> {
    let bytes = encode(set, medium_name)?;
    let mut f = std::fs::File::create(path).map_err(LabError::io(path))?;
    f.write_all(&bytes).map_err(LabError::io(path))
}

pub fn read(path: &Path) -> Result<(CorrectorSet, Manifest)> {
    decode(&std::fs::read(path).map_err(LabError::io(path))?)
}
