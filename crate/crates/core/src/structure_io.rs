//! Backbone-only PDB reading and torsion angles.
//!
//! Only `ATOM` records of the first model are read. For each residue of the selected
//! chain the N, CA, C and O atoms are kept (first alternate location wins); side
//! chains, hydrogens and insertion-coded residues are dropped.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amino::AminoAcidTable;
use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residue {
    /// 1-based position along the parsed chain.
    pub index: usize,
    /// Residue sequence number as written in the file.
    pub seq_num: i32,
    pub aa: char,
    pub n: Option<Point3>,
    pub ca: Option<Point3>,
    pub c: Option<Point3>,
    pub o: Option<Point3>,
}

impl Residue {
    fn new(index: usize, seq_num: i32, aa: char) -> Self {
        Self {
            index,
            seq_num,
            aa,
            n: None,
            ca: None,
            c: None,
            o: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneStructure {
    pub pdb_id: String,
    pub chain: char,
    pub residues: Vec<Residue>,
}

impl BackboneStructure {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn sequence(&self) -> String {
        self.residues.iter().map(|r| r.aa).collect()
    }

    /// Residue at a 1-based position.
    pub fn residue(&self, pos: usize) -> Result<&Residue> {
        if pos == 0 || pos > self.residues.len() {
            return Err(Error::Bounds {
                index: pos,
                len: self.residues.len(),
            });
        }
        Ok(&self.residues[pos - 1])
    }

    /// Writes the retained backbone atoms as fixed-column `ATOM` records.
    pub fn to_pdb_string(&self) -> String {
        let table = AminoAcidTable::builtin();
        let mut out = String::new();
        let mut serial = 1;
        for r in &self.residues {
            let resname = table.get(r.aa).map_or("UNK", |p| p.three_letter);
            for (name, atom, element) in [(" N  ", r.n, "N"), (" CA ", r.ca, "C"), (" C  ", r.c, "C"), (" O  ", r.o, "O")] {
                if let Some([x, y, z]) = atom {
                    let _ = writeln!(
                        out,
                        "ATOM  {serial:>5} {name} {resname:>3} {chain}{seq:>4}    {x:>8.3}{y:>8.3}{z:>8.3}  1.00  0.00          {element:>2}",
                        chain = self.chain,
                        seq = r.seq_num,
                    );
                    serial += 1;
                }
            }
        }
        out.push_str("TER\nEND\n");
        out
    }
}

/// Torsion angles of one residue in degrees, `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DihedralTriple {
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub omega: Option<f64>,
}

fn field(line: &str, start: usize, end: usize) -> &str {
    line.get(start..end.min(line.len())).unwrap_or("")
}

fn parse_coord(line: &str, start: usize, lineno: usize, axis: char) -> Result<f64> {
    let raw = field(line, start, start + 8).trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("bad {axis} coordinate {raw:?}"),
        })
}

/// Parses backbone atoms of one chain. `chain = None` selects the first chain seen.
pub fn parse_pdb(text: &str, chain: Option<char>) -> Result<BackboneStructure> {
    let table = AminoAcidTable::builtin();
    let mut pdb_id = String::new();
    let mut selected = chain;
    let mut residues: Vec<Residue> = Vec::new();
    let mut saw_atom = false;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.starts_with("HEADER") {
            pdb_id = field(line, 62, 66).trim().to_string();
            continue;
        }
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM  ") {
            continue;
        }
        if line.len() < 54 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("ATOM record too short ({} columns)", line.len()),
            });
        }
        saw_atom = true;
        let line_chain = line.as_bytes()[21] as char;
        match selected {
            None => selected = Some(line_chain),
            Some(c) if c != line_chain => continue,
            Some(_) => {}
        }
        if line.as_bytes()[26] != b' ' {
            continue;
        }
        let seq_num: i32 = field(line, 22, 26).trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad residue number {:?}", field(line, 22, 26)),
        })?;
        let x = parse_coord(line, 30, lineno, 'x')?;
        let y = parse_coord(line, 38, lineno, 'y')?;
        let z = parse_coord(line, 46, lineno, 'z')?;

        let pos = match residues.iter().rposition(|r| r.seq_num == seq_num) {
            Some(p) => p,
            None => {
                let aa = table.from_three_letter(field(line, 17, 20));
                residues.push(Residue::new(residues.len() + 1, seq_num, aa));
                residues.len() - 1
            }
        };
        let residue = &mut residues[pos];
        let slot = match field(line, 12, 16).trim() {
            "N" => &mut residue.n,
            "CA" => &mut residue.ca,
            "C" => &mut residue.c,
            "O" => &mut residue.o,
            _ => continue,
        };
        if slot.is_none() {
            *slot = Some([x, y, z]);
        }
    }

    if residues.is_empty() {
        let detail = match (saw_atom, chain) {
            (true, Some(c)) => format!(" for chain {c}"),
            _ => String::new(),
        };
        return Err(Error::EmptyStructure(detail));
    }
    Ok(BackboneStructure {
        pdb_id,
        chain: selected.unwrap_or('A'),
        residues,
    })
}

/// Reads a PDB file; the structure id is the file stem, upper-cased.
pub fn read_pdb_file(path: &Path, chain: Option<char>) -> Result<BackboneStructure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = parse_pdb(&text, chain)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        s.pdb_id = stem.to_ascii_uppercase();
    }
    Ok(s)
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Signed torsion angle in degrees, in `(-180, 180]`.
///
/// Sign follows the IUPAC convention: looking down `p2→p3`, a clockwise rotation
/// of `p1` onto `p4` is positive, so `(0,1,0),(0,0,0),(1,0,0),(1,0,1)` gives `+90`.
pub fn dihedral(p1: Point3, p2: Point3, p3: Point3, p4: Point3) -> Result<f64> {
    let b1 = sub(p2, p1);
    let b2 = sub(p3, p2);
    let b3 = sub(p4, p3);
    let (l1, l2, l3) = (norm(b1), norm(b2), norm(b3));
    if l1 <= 1e-9 || l2 <= 1e-9 || l3 <= 1e-9 {
        return Err(Error::Geometry("consecutive points coincide".into()));
    }
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    if norm(n1) <= 1e-9 * l1 * l2 || norm(n2) <= 1e-9 * l2 * l3 {
        return Err(Error::Geometry("three consecutive points are collinear".into()));
    }
    let y = l2 * dot(b1, n2);
    let x = dot(n1, n2);
    let deg = y.atan2(x).to_degrees();
    Ok(if deg <= -180.0 { deg + 360.0 } else { deg })
}

fn torsion(points: [Option<Point3>; 4]) -> Option<f64> {
    let [a, b, c, d] = points;
    dihedral(a?, b?, c?, d?).ok()
}

/// Phi, psi and omega for every residue; absent at termini and where atoms are missing.
pub fn backbone_dihedrals(s: &BackboneStructure) -> Vec<DihedralTriple> {
    let rs = &s.residues;
    (0..rs.len())
        .map(|i| {
            let prev = i.checked_sub(1).map(|j| &rs[j]);
            let next = rs.get(i + 1);
            let cur = &rs[i];
            DihedralTriple {
                phi: prev.and_then(|p| torsion([p.c, cur.n, cur.ca, cur.c])),
                psi: next.and_then(|n| torsion([cur.n, cur.ca, cur.c, n.n])),
                omega: next.and_then(|n| torsion([cur.ca, cur.c, n.n, n.ca])),
            }
        })
        .collect()
}
