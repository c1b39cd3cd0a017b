//! The twenty canonical amino acids and their bundled property table.

use once_cell::sync::Lazy;

/// Canonical one-letter codes in alphabetical order. Every 20-wide grid in the crate
/// (one-hot vectors, substitution matrices, scan columns) uses this order.
pub const ALPHABET: [char; 20] = [
    'A', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'K', 'L', 'M', 'N', 'P', 'Q', 'R', 'S', 'T', 'V', 'W',
    'Y',
];

/// Code used for residues outside the canonical twenty.
pub const UNKNOWN: char = 'X';

pub fn index_of(code: char) -> Option<usize> {
    ALPHABET.binary_search(&code.to_ascii_uppercase()).ok()
}

pub fn is_canonical(code: char) -> bool {
    index_of(code).is_some()
}

pub fn one_hot(code: char) -> [f64; 20] {
    let mut v = [0.0; 20];
    if let Some(i) = index_of(code) {
        v[i] = 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct AminoAcidProps {
    pub code: char,
    pub three_letter: &'static str,
    /// Free amino-acid mass in daltons.
    pub molecular_weight: f64,
    /// Kyte-Doolittle hydropathy.
    pub hydrophobicity: f64,
}

/// Per-residue physicochemical properties indexed by [`ALPHABET`] position.
#[derive(Debug, Clone)]
pub struct AminoAcidTable {
    entries: Vec<AminoAcidProps>,
}

const TABLE_ASSET: &str = include_str!("../data/amino_acids.tsv");

static BUILTIN: Lazy<AminoAcidTable> =
    Lazy::new(|| AminoAcidTable::parse(TABLE_ASSET).expect("bundled amino-acid table is valid"));

impl AminoAcidTable {
    pub fn builtin() -> &'static AminoAcidTable {
        &BUILTIN
    }

    fn parse(text: &'static str) -> Result<Self, String> {
        let mut entries: Vec<AminoAcidProps> = Vec::with_capacity(20);
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let f: Vec<&'static str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(format!("bad amino-acid row: {line}"));
            }
            let code = f[0].chars().next().ok_or("empty code")?;
            entries.push(AminoAcidProps {
                code,
                three_letter: f[1],
                molecular_weight: f[2].parse().map_err(|e| format!("{line}: {e}"))?,
                hydrophobicity: f[3].parse().map_err(|e| format!("{line}: {e}"))?,
            });
        }
        entries.sort_by_key(|e| e.code);
        let codes: Vec<char> = entries.iter().map(|e| e.code).collect();
        if codes != ALPHABET {
            return Err(format!("table must list exactly the 20 canonical codes, got {codes:?}"));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, code: char) -> Option<&AminoAcidProps> {
        index_of(code).map(|i| &self.entries[i])
    }

    pub fn molecular_weight(&self, code: char) -> Option<f64> {
        self.get(code).map(|p| p.molecular_weight)
    }

    pub fn hydrophobicity(&self, code: char) -> Option<f64> {
        self.get(code).map(|p| p.hydrophobicity)
    }

    pub fn entries(&self) -> &[AminoAcidProps] {
        &self.entries
    }

    /// One-letter code for a PDB three-letter residue name; `'X'` when unknown.
    pub fn from_three_letter(&self, name: &str) -> char {
        let name = name.trim();
        self.entries
            .iter()
            .find(|e| e.three_letter.eq_ignore_ascii_case(name))
            .map_or(UNKNOWN, |e| e.code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_twenty_orthonormal_one_hots() {
        let table = AminoAcidTable::builtin();
        assert_eq!(table.entries().len(), 20);
        for a in ALPHABET {
            for b in ALPHABET {
                let dot: f64 = one_hot(a).iter().zip(one_hot(b)).map(|(x, y)| x * y).sum();
                assert_eq!(dot, if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn three_letter_mapping() {
        let table = AminoAcidTable::builtin();
        assert_eq!(table.from_three_letter("GLY"), 'G');
        assert_eq!(table.from_three_letter("trp"), 'W');
        assert_eq!(table.from_three_letter("MSE"), 'X');
        assert_eq!(index_of('X'), None);
        assert_eq!(one_hot('X'), [0.0; 20]);
    }

    #[test]
    fn masses() {
        let table = AminoAcidTable::builtin();
        assert_eq!(table.molecular_weight('A'), Some(89.09));
        assert_eq!(table.molecular_weight('G'), Some(75.07));
    }
}
