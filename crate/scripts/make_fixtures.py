#!/usr/bin/env python3
"""Regenerates the files under fixtures/.

Backbones are built with ideal bond geometry (NeRF placement) from a phi/psi
schedule, so they are synthetic stand-ins rather than experimental structures.
"""
import math
import random
import struct
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

T4L = (
    "MNIFEMLRIDEGLRLKIYKDTEGYYTIGIGHLLTKSPSLNAAKSELDKAIGRNCNGVITKDEAEKLFNQDVDAAVRGILRNAKLKPVYDSLDAVRRCALINMVFQMGETGVAGFTNSLRMLQQKRWDEAAVNLAKSRWYNQTPNRAKRVITTFRTGTWDAYKNL"
)
SYN1 = "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQAPILSRVGDGTQDNLSGAE"
SYN2 = "GSHMVLSEGEWQLVLHVWAKVEADVAGHGQDILIRLFKSHPETLEKF"

THREE = {
    "A": "ALA", "C": "CYS", "D": "ASP", "E": "GLU", "F": "PHE", "G": "GLY", "H": "HIS", "I": "ILE",
    "K": "LYS", "L": "LEU", "M": "MET", "N": "ASN", "P": "PRO", "Q": "GLN", "R": "ARG", "S": "SER",
    "T": "THR", "V": "VAL", "W": "TRP", "Y": "TYR",
}
KD = {
    "A": 1.8, "R": -4.5, "N": -3.5, "D": -3.5, "C": 2.5, "Q": -3.5, "E": -3.5, "G": -0.4, "H": -3.2, "I": 4.5,
    "L": 3.8, "K": -3.9, "M": 1.9, "F": 2.8, "P": -1.6, "S": -0.8, "T": -0.7, "W": -0.9, "Y": -1.3, "V": 4.2,
}
ALPHABET = "ACDEFGHIKLMNPQRSTVWY"


def place(a, b, c, bond, angle, torsion):
    """Fourth atom d with |cd| = bond, angle(b, c, d) = angle, dihedral(a, b, c, d) = torsion (degrees)."""
    ang, tor = math.radians(angle), math.radians(torsion)
    bc = [c[i] - b[i] for i in range(3)]
    nbc = math.sqrt(sum(v * v for v in bc))
    bc = [v / nbc for v in bc]
    ab = [b[i] - a[i] for i in range(3)]
    n = [ab[1] * bc[2] - ab[2] * bc[1], ab[2] * bc[0] - ab[0] * bc[2], ab[0] * bc[1] - ab[1] * bc[0]]
    nn = math.sqrt(sum(v * v for v in n))
    n = [v / nn for v in n]
    m = [n[1] * bc[2] - n[2] * bc[1], n[2] * bc[0] - n[0] * bc[2], n[0] * bc[1] - n[1] * bc[0]]
    d2 = [-bond * math.cos(ang), bond * math.sin(ang) * math.cos(tor), bond * math.sin(ang) * math.sin(tor)]
    return [c[i] + d2[0] * bc[i] + d2[1] * m[i] + d2[2] * n[i] for i in range(3)]


def backbone(seq, schedule):
    n = [0.0, 1.458, 0.0]
    ca = [0.0, 0.0, 0.0]
    c = place([1.0, 1.458, 0.0], n, ca, 1.525, 111.2, -60.0)
    atoms = []
    for i, _ in enumerate(seq):
        phi, psi = schedule(i)
        if i > 0:
            n = place(prev_n, prev_ca, prev_c, 1.329, 116.2, prev_psi)
            ca = place(prev_ca, prev_c, n, 1.458, 121.7, 180.0)
            c = place(prev_c, n, ca, 1.525, 111.2, phi)
        nxt = place(n, ca, c, 1.329, 116.2, psi)
        o = place(nxt, ca, c, 1.231, 120.5, 180.0)
        atoms.append((n, ca, c, o))
        prev_n, prev_ca, prev_c, prev_psi = n, ca, c, psi
    return atoms


def segments(i):
    # alternating helix / strand blocks, loops at block edges
    block = (i // 11) % 3
    if i % 11 in (0, 10):
        return (-70.0, 150.0)
    return [(-57.0, -47.0), (-120.0, 130.0), (-63.0, -41.0)][block]


def write_pdb(path, pdb_id, chain, seq, atoms, start=1):
    lines = [f"HEADER    SYNTHETIC BACKBONE                      01-JAN-00   {pdb_id:<4}"]
    serial = 1
    for k, (aa, xyz) in enumerate(zip(seq, atoms)):
        for name, p, el in zip(("N", "CA", "C", "O"), xyz, ("N", "C", "C", "O")):
            lines.append(
                f"ATOM  {serial:5d} {name:<4s} {THREE[aa]} {chain}{start + k:4d}    "
                f"{p[0]:8.3f}{p[1]:8.3f}{p[2]:8.3f}{1.0:6.2f}{20.0:6.2f}          {el:>2s}"
            )
            serial += 1
    lines.append(f"TER   {serial:5d}      {THREE[seq[-1]]} {chain}{start + len(seq) - 1:4d}")
    lines.append("END")
    path.write_text("\n".join(lines) + "\n")


def ddg(seq, pos, wt, mt, rng):
    lo, hi = max(0, pos - 4), min(len(seq), pos + 3)
    burial = sum(KD[a] for a in seq[lo:hi]) / (hi - lo)
    core = 0.35 * (KD[wt] - KD[mt]) * (1.0 + 0.15 * burial)
    special = 1.2 if mt == "P" else 0.0
    special += 0.8 if wt == "G" else 0.0
    return round(core / 2.0 + special + rng.gauss(0.0, 0.4), 3)


def corpus():
    rng = random.Random(2659)
    pdb_dir = ROOT / "corpus" / "pdb"
    pdb_dir.mkdir(parents=True, exist_ok=True)
    proteins = [("2LZM", T4L, 1), ("1SYN", SYN1, 1), ("2SYN", SYN2, 5)]
    rows = []
    for pdb_id, seq, start in proteins:
        write_pdb(pdb_dir / f"{pdb_id}.pdb", pdb_id, "A", seq, backbone(seq, segments), start)
        n = {"2LZM": 150, "1SYN": 60, "2SYN": 40}[pdb_id]
        seen = set()
        while len(seen) < n:
            pos = rng.randrange(len(seq))
            wt = seq[pos]
            mt = "A" if rng.random() < 0.35 and wt != "A" else rng.choice([a for a in ALPHABET if a != wt])
            if (pos, mt) in seen:
                continue
            seen.add((pos, mt))
            split = "val" if rng.random() < 0.13 else "train"
            rows.append(f"{pdb_id},A,{pos + 1},{wt},{mt},{ddg(seq, pos, wt, mt, rng)},{split}")
    # one exact repeat and one conflicting repeat, both dropped by dedup
    rows.append(rows[3])
    first = rows[10].split(",")
    first[5] = str(round(float(first[5]) + 1.0, 3))
    rows.append(",".join(first))
    (ROOT / "corpus" / "dataset.csv").write_text("pdb_id,chain,position,wt_aa,mut_aa,ddg,split\n" + "\n".join(rows) + "\n")


def dedup_fixture():
    # 2659 train rows with 14 repeats, 402 val rows with 4 repeats
    rng = random.Random(17)
    rows = []
    for split, total, dups in (("train", 2659, 14), ("val", 402, 4)):
        unique = []
        for i in range(total - dups):
            pos = i + 1
            wt = ALPHABET[i % 20]
            mt = ALPHABET[(i + 7) % 20]
            unique.append(f"D{split[0].upper()}{i // 500:02d},A,{pos},{wt},{mt},{round(rng.uniform(-3, 3), 3)},{split}")
        repeats = rng.sample(unique, dups)
        block = unique + [r.rsplit(",", 2)[0] + f",{round(rng.uniform(-3, 3), 3)},{split}" for r in repeats]
        rows.extend(block)
    (ROOT / "dedup.csv").write_text("pdb_id,chain,position,wt_aa,mut_aa,ddg,split\n" + "\n".join(rows) + "\n")


def golden_emb1():
    ident = b"GOLD_A"
    values = [0.5, -1.25, 3.0, 0.0, -0.125, 1024.0]
    blob = b"EMB1" + struct.pack("<III", 3, 2, len(ident)) + ident + struct.pack("<6f", *values)
    (ROOT / "golden.emb1").write_bytes(blob)


if __name__ == "__main__":
    assert len(T4L) == 164, len(T4L)
    ROOT.mkdir(exist_ok=True)
    corpus()
    dedup_fixture()
    golden_emb1()
