//! Substitution matrices and the hand-engineered per-mutation feature vector.

use std::fmt::Write as _;
use std::path::Path;

use crate::amino::{self, AminoAcidTable, ALPHABET};
use crate::error::{Error, Result};
use crate::structure_io::{BackboneStructure, DihedralTriple};

pub const DEFAULT_WINDOW: usize = 7;

const BLOSUM62_ASSET: &str = include_str!("../data/blosum62.txt");
const DEMASK_ASSET: &str = include_str!("../data/demask_directional.txt");

/// 20×20 score grid indexed `[wild type][mutant]` in [`ALPHABET`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionMatrix {
    pub name: String,
    pub scores: [[f64; 20]; 20],
    pub symmetric: bool,
}

impl SubstitutionMatrix {
    /// Parses the plain-text matrix format: `#` comments (a `# kind: symmetric` or
    /// `# kind: directional` comment sets the flag, default directional), a header
    /// row of one-letter codes, then one row per code.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut symmetric = false;
        let mut header: Option<Vec<usize>> = None;
        let mut scores = [[f64::NAN; 20]; 20];
        let mut seen_rows = [false; 20];
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(kind) = comment.trim().strip_prefix("kind:") {
                    symmetric = match kind.trim() {
                        "symmetric" => true,
                        "directional" => false,
                        other => {
                            return Err(Error::Parse {
                                line: lineno,
                                message: format!("unknown matrix kind {other:?}"),
                            })
                        }
                    };
                }
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let code = |t: &str| -> Result<usize> {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => amino::index_of(c).ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("non-canonical code {t:?}"),
                    }),
                    _ => Err(Error::Parse {
                        line: lineno,
                        message: format!("expected a one-letter code, found {t:?}"),
                    }),
                }
            };
            match &header {
                None => header = Some(tokens.iter().map(|t| code(t)).collect::<Result<_>>()?),
                Some(cols) => {
                    let row = code(tokens[0])?;
                    if tokens.len() - 1 != cols.len() {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("expected {} scores, found {}", cols.len(), tokens.len() - 1),
                        });
                    }
                    for (&col, tok) in cols.iter().zip(&tokens[1..]) {
                        let v: f64 = tok.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("bad score {tok:?}"),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Parse {
                                line: lineno,
                                message: "non-finite score".into(),
                            });
                        }
                        scores[row][col] = v;
                    }
                    seen_rows[row] = true;
                }
            }
        }
        for a in 0..20 {
            for b in 0..20 {
                if scores[a][b].is_nan() {
                    return Err(Error::Format(format!(
                        "matrix {name}: missing cell {}→{}",
                        ALPHABET[a], ALPHABET[b]
                    )));
                }
                if symmetric && scores[a][b] != scores[b][a] {
                    return Err(Error::Format(format!(
                        "matrix {name} is marked symmetric but {}→{} differs from {}→{}",
                        ALPHABET[a], ALPHABET[b], ALPHABET[b], ALPHABET[a]
                    )));
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            scores,
            symmetric,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("matrix");
        Self::parse(name, &text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kind = if self.symmetric { "symmetric" } else { "directional" };
        let _ = writeln!(out, "# {}\n# kind: {kind}", self.name);
        let header: Vec<String> = ALPHABET.iter().map(char::to_string).collect();
        let _ = writeln!(out, "  {}", header.join(" "));
        for (a, row) in self.scores.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{} {}", ALPHABET[a], cells.join(" "));
        }
        out
    }

    pub fn is_all_zero(&self) -> bool {
        self.scores.iter().flatten().all(|&v| v == 0.0)
    }
}

pub fn lookup_substitution(m: &SubstitutionMatrix, wt: char, mutant: char) -> Result<f64> {
    let a = amino::index_of(wt).ok_or_else(|| Error::Domain(format!("non-canonical wild type {wt:?}")))?;
    let b = amino::index_of(mutant).ok_or_else(|| Error::Domain(format!("non-canonical mutant {mutant:?}")))?;
    Ok(m.scores[a][b])
}

/// Bundled BLOSUM62 followed by the directional DeMaSK-style matrix.
pub fn builtin_matrices() -> Result<Vec<SubstitutionMatrix>> {
    let blosum = SubstitutionMatrix::parse("BLOSUM62", BLOSUM62_ASSET)?;
    let demask = SubstitutionMatrix::parse("DeMaSK", DEMASK_ASSET)?;
    if demask.is_all_zero() {
        log::warn!("DeMaSK matrix is the all-zero placeholder; supply real scores to use it");
    }
    Ok(vec![blosum, demask])
}

/// Named slice of a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationFeatures {
    vector: Vec<f64>,
    layout: Vec<Segment>,
}

impl MutationFeatures {
    pub fn new() -> Self {
        Self {
            vector: Vec::new(),
            layout: Vec::new(),
        }
    }

    pub fn push_segment(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("segment {name}: non-finite value at {i}")));
        }
        self.vector.extend_from_slice(values);
        self.layout.push(Segment {
            name: name.to_string(),
            len: values.len(),
        });
        debug_assert_eq!(self.layout.iter().map(|s| s.len).sum::<usize>(), self.vector.len());
        Ok(())
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let mut start = 0;
        for s in &self.layout {
            if s.name == name {
                return Some(&self.vector[start..start + s.len]);
            }
            start += s.len;
        }
        None
    }
}

impl Default for MutationFeatures {
    fn default() -> Self {
        Self::new()
    }
}

/// `[sin, cos, 1]` for a present angle, `[0, 0, 0]` for an absent one.
pub fn encode_angle(angle: Option<f64>) -> [f64; 3] {
    match angle {
        Some(deg) => {
            let r = deg.to_radians();
            [r.sin(), r.cos(), 1.0]
        }
        None => [0.0, 0.0, 0.0],
    }
}

/// Everything needed to featurize mutations: property table and both matrices.
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    pub table: &'static AminoAcidTable,
    pub blosum: SubstitutionMatrix,
    pub demask: SubstitutionMatrix,
    pub window: usize,
}

impl FeatureBuilder {
    pub fn builtin(window: usize) -> Result<Self> {
        let mut ms = builtin_matrices()?.into_iter();
        let blosum = ms.next().expect("blosum");
        let demask = ms.next().expect("demask");
        Self::new(blosum, demask, window)
    }

    pub fn new(blosum: SubstitutionMatrix, demask: SubstitutionMatrix, window: usize) -> Result<Self> {
        check_window(window)?;
        Ok(Self {
            table: AminoAcidTable::builtin(),
            blosum,
            demask,
            window,
        })
    }

    /// Number of values `mutation_features` emits (before any embedding segments).
    pub fn feature_len(&self) -> usize {
        20 + 20 + 1 + 1 + 1 + 1 + 9 + 2
    }

    /// Segments: wild-type and mutant one-hots, mass and hydropathy deltas, BLOSUM and
    /// DeMaSK scores, site phi/psi/omega as (sin, cos, present), and window aggregates
    /// (mean hydropathy of in-chain residues, fraction of the window inside the chain).
    pub fn mutation_features(
        &self,
        s: &BackboneStructure,
        dihedrals: &[DihedralTriple],
        pos: usize,
        wt: char,
        mutant: char,
    ) -> Result<MutationFeatures> {
        let residue = s.residue(pos)?;
        if residue.aa != wt {
            return Err(Error::Consistency(format!(
                "{} position {pos} is {} in the structure but the mutation says {wt}",
                s.pdb_id, residue.aa
            )));
        }
        if dihedrals.len() != s.len() {
            return Err(Error::Shape(format!(
                "{} dihedral triples for {} residues",
                dihedrals.len(),
                s.len()
            )));
        }
        let wt_props = self
            .table
            .get(wt)
            .ok_or_else(|| Error::Domain(format!("non-canonical wild type {wt:?}")))?;
        let mut_props = self
            .table
            .get(mutant)
            .ok_or_else(|| Error::Domain(format!("non-canonical mutant {mutant:?}")))?;

        let mut f = MutationFeatures::new();
        f.push_segment("one_hot_wt", &amino::one_hot(wt))?;
        f.push_segment("one_hot_mut", &amino::one_hot(mutant))?;
        f.push_segment("delta_molecular_weight", &[mut_props.molecular_weight - wt_props.molecular_weight])?;
        f.push_segment("delta_hydrophobicity", &[mut_props.hydrophobicity - wt_props.hydrophobicity])?;
        f.push_segment("blosum", &[lookup_substitution(&self.blosum, wt, mutant)?])?;
        f.push_segment("demask", &[lookup_substitution(&self.demask, wt, mutant)?])?;

        let site = dihedrals[pos - 1];
        let mut angles = Vec::with_capacity(9);
        for a in [site.phi, site.psi, site.omega] {
            angles.extend_from_slice(&encode_angle(a));
        }
        f.push_segment("site_dihedrals", &angles)?;

        let half = self.window / 2;
        let mut hydro = 0.0;
        let mut inside = 0usize;
        for offset in 0..self.window {
            let p = pos as isize - half as isize + offset as isize;
            if p < 1 || p as usize > s.len() {
                continue;
            }
            inside += 1;
            hydro += self
                .table
                .hydrophobicity(s.residues[p as usize - 1].aa)
                .unwrap_or(0.0);
        }
        f.push_segment(
            "window_aggregates",
            &[hydro / inside as f64, inside as f64 / self.window as f64],
        )?;
        Ok(f)
    }
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Domain(format!("window must be a positive odd count, got {window}")));
    }
    Ok(())
}

/// Feature vector using the bundled matrices.
pub fn mutation_features(
    s: &BackboneStructure,
    dihedrals: &[DihedralTriple],
    pos: usize,
    wt: char,
    mutant: char,
    window: usize,
) -> Result<MutationFeatures> {
    FeatureBuilder::builtin(window)?.mutation_features(s, dihedrals, pos, wt, mutant)
}
