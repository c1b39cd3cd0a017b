//! Per-residue embeddings: the EMB1 interchange file, a deterministic desk-scale
//! embedder standing in for pretrained encoders, and window/mean pooling.
//!
//! EMB1 layout (little-endian): `b"EMB1"`, `u32` residue count L, `u32` dim,
//! `u32` byte length of the protein id followed by its UTF-8 bytes, then
//! `L × dim` `f32` values in row-major order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amino::{self, AminoAcidTable};
use crate::error::{Error, Result};
use crate::features::{check_window, encode_angle};
use crate::nncore::Tensor2;
use crate::structure_io::{BackboneStructure, DihedralTriple};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const EXTERNAL_PROVIDER: &str = "external_file";
pub const DESK_PROVIDER: &str = "desk_scale";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub protein_id: String,
    pub provider: String,
    /// `L × dim`
    vectors: Tensor2,
}

impl EmbeddingSet {
    pub fn new(protein_id: impl Into<String>, provider: impl Into<String>, vectors: Tensor2) -> Result<Self> {
        if vectors.cols() == 0 {
            return Err(Error::Data("embedding dimension must be at least 1".into()));
        }
        if vectors.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite embedding value".into()));
        }
        Ok(Self {
            protein_id: protein_id.into(),
            provider: provider.into(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Row for a 0-based residue offset.
    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn vectors(&self) -> &Tensor2 {
        &self.vectors
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let id = self.protein_id.as_bytes();
        let mut out = Vec::with_capacity(16 + id.len() + 4 * self.vectors.as_slice().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        for &v in self.vectors.as_slice() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::Data(format!("value {v} does not fit in f32")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing EMB1 magic".into()));
        }
        let u32_at = |off: usize| -> Result<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| Error::Format("truncated EMB1 header".into()))
        };
        let len = u32_at(4)? as usize;
        let dim = u32_at(8)? as usize;
        let id_len = u32_at(12)? as usize;
        let id_bytes = bytes
            .get(16..16 + id_len)
            .ok_or_else(|| Error::Format("truncated protein id".into()))?;
        let protein_id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::Format("protein id is not UTF-8".into()))?
            .to_string();
        let payload = &bytes[16 + id_len..];
        let expected = len * dim;
        if payload.len() < expected * 4 {
            return Err(Error::Length {
                expected,
                found: payload.len() / 4,
            });
        }
        if payload.len() > expected * 4 {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected * 4
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at row {}, column {}", i / dim.max(1), i % dim.max(1))));
        }
        let vectors = Tensor2::from_vec(len, dim, data)?;
        Self::new(protein_id, EXTERNAL_PROVIDER, vectors)
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_bytes(&bytes)
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &set.to_bytes()?)
}

/// Deterministic stand-in for a pretrained per-residue encoder: a fixed seeded random
/// linear projection of hand-built residue descriptors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskEmbedder {
    pub dim: usize,
    pub seed: u64,
    /// Include phi/psi/omega encodings (structure-aware); off gives a sequence-only embedder.
    pub geometry: bool,
    /// Include the relative sequence position.
    pub position: bool,
}

/// one-hot (20) + hydropathy + mass + 3 × (sin, cos, present) + relative position
const DESCRIPTOR_LEN: usize = 20 + 2 + 9 + 1;

impl DeskEmbedder {
    pub fn structural(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            geometry: true,
            position: true,
        }
    }

    pub fn sequence(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            geometry: false,
            position: true,
        }
    }

    /// The `dim × descriptor` projection matrix.
    pub fn projection(&self) -> Tensor2 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (DESCRIPTOR_LEN as f64).sqrt();
        let data = (0..self.dim * DESCRIPTOR_LEN)
            .map(|_| rng.gen_range(-1.0..1.0) * scale)
            .collect();
        Tensor2::from_vec(self.dim, DESCRIPTOR_LEN, data).expect("projection shape")
    }

    pub fn descriptor(
        &self,
        table: &AminoAcidTable,
        aa: char,
        angles: DihedralTriple,
        offset: usize,
        len: usize,
    ) -> Vec<f64> {
        let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
        d.extend_from_slice(&amino::one_hot(aa));
        d.push(table.hydrophobicity(aa).unwrap_or(0.0) / 4.5);
        d.push(table.molecular_weight(aa).map_or(0.0, |m| (m - 110.0) / 100.0));
        for a in [angles.phi, angles.psi, angles.omega] {
            let enc = if self.geometry { encode_angle(a) } else { [0.0; 3] };
            d.extend_from_slice(&enc);
        }
        let rel = if self.position && len > 1 {
            offset as f64 / (len - 1) as f64
        } else {
            0.0
        };
        d.push(rel);
        d
    }

    pub fn embed(
        &self,
        s: &BackboneStructure,
        dihedrals: &[DihedralTriple],
        table: &AminoAcidTable,
    ) -> Result<EmbeddingSet> {
        if self.dim < 8 {
            return Err(Error::Domain(format!("desk-scale embedding dim must be ≥ 8, got {}", self.dim)));
        }
        if dihedrals.len() != s.len() {
            return Err(Error::Shape(format!(
                "{} dihedral triples for {} residues",
                dihedrals.len(),
                s.len()
            )));
        }
        let proj = self.projection();
        let len = s.len();
        let mut data = Vec::with_capacity(len * self.dim);
        for (i, (r, &angles)) in s.residues.iter().zip(dihedrals).enumerate() {
            let x = self.descriptor(table, r.aa, angles, i, len);
            data.extend(proj.matvec(&x)?);
        }
        EmbeddingSet::new(s.pdb_id.clone(), DESK_PROVIDER, Tensor2::from_vec(len, self.dim, data)?)
    }
}

pub fn desk_scale_embed(
    s: &BackboneStructure,
    dihedrals: &[DihedralTriple],
    table: &AminoAcidTable,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    DeskEmbedder::structural(dim, seed).embed(s, dihedrals, table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    /// `window × dim`, rows outside the chain zero-filled.
    pub local: Vec<f64>,
    /// One flag per window slot: 1 inside the chain, 0 for padding.
    pub presence: Vec<f64>,
    /// Column mean over all rows.
    pub pooled: Vec<f64>,
}

/// Window rows centred on 1-based `pos` plus the mean of all rows.
pub fn pool_embeddings(e: &EmbeddingSet, pos: usize, window: usize) -> Result<PooledEmbedding> {
    check_window(window)?;
    let len = e.len();
    if pos == 0 || pos > len {
        return Err(Error::Bounds { index: pos, len });
    }
    let dim = e.dim();
    let half = (window / 2) as isize;
    let mut local = Vec::with_capacity(window * dim);
    let mut presence = Vec::with_capacity(window);
    for k in -half..=half {
        let p = pos as isize - 1 + k;
        if p >= 0 && (p as usize) < len {
            local.extend_from_slice(e.row(p as usize));
            presence.push(1.0);
        } else {
            local.extend(std::iter::repeat(0.0).take(dim));
            presence.push(0.0);
        }
    }
    let mut pooled = vec![0.0; dim];
    for i in 0..len {
        for (acc, v) in pooled.iter_mut().zip(e.row(i)) {
            *acc += v;
        }
    }
    for v in &mut pooled {
        *v /= len as f64;
    }
    Ok(PooledEmbedding {
        local,
        presence,
        pooled,
    })
}
