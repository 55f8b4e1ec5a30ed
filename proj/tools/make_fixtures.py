#!/usr/bin/env python3
"""Regenerates the bundled CSV fixtures under data/fixtures/.

Output is deterministic (fixed seeds). Molecules are assembled from fragment
lists so every row is a distinct structure; the C++ test-suite checks that
each string parses and that canonical forms are unique.
"""

import csv
import itertools
import math
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "fixtures"

# Biphenyl-style cores with two attachment points {a} and {b}.
PDL1_CORES = [
    "Cc1c({a})cccc1-c1ccccc1{b}",
    "c1cc({a})ccc1-c1ccc({b})cc1",
    "COc1cc({a})ccc1-c1cccc({b})c1",
    "Clc1c({a})cccc1-c1ccccc1{b}",
    "c1cc({a})cc(c1)-c1ccc2OCCOc2c1{b}",
    "Fc1cc({a})ccc1-c1cccnc1{b}",
    "c1cnc({a})cc1-c1ccccc1{b}",
]
PDL1_SUBST_A = [
    "OC", "OCC", "OCc%11ccccc%11", "OCc%11cccnc%11", "OCc%11cccc(C#N)c%11", "CO", "CN", "CNCCO",
    "CNCC(=O)O", "OCCN", "C(=O)O", "C(=O)N", "OCCCN%11CCCC%11", "OCc%11ccc(F)cc%11",
]
PDL1_SUBST_B = ["C", "F", "Cl", "O", "N", "C(F)(F)F", "OC", "C#N", "CO", "CC"]

KINASE_CORES = [
    "c1ccc2ncnc({a})c2c1{b}",
    "c1c({b})c({a})ncn1",
    "c1ccc(cc1{b})Nc1nccc({a})n1",
    "O=C(Nc1ccc({a})cc1)Nc1cccc({b})c1",
    "c1c({b})c2cc[nH]c2nc1{a}",
    "O=C1Nc2ccc({a})cc2C1=Cc1cc({b})c[nH]1",
    "c1ccc2c(c1)nc(n2{a}){b}",
    "Cn1cc(cn1)-c1cnc({a})nc1{b}",
    "c1cc({a})c2ncccc2c1{b}",
    "c1nc({a})c2cc({b})[nH]c2n1",
    "O=C(c1ccc({a})cc1)N1CCN(CC1){b}",
    "c1ccc(cc1{a})S(=O)(=O)N{b}",
]
KINASE_SUBST_A = [
    "N", "NC", "NCC", "OC", "Cl", "F", "C", "CC", "C#N", "NC(=O)C", "N%11CCOCC%11", "N%11CCNCC%11",
    "OCCO", "c%11ccccc%11", "c%11ccncc%11", "C(F)(F)F", "NS(C)(=O)=O", "C(=O)N",
]
KINASE_SUBST_B = ["", "C", "F", "Cl", "O", "OC", "N", "CC", "Br", "C#N", "I", "CCC", "OCC"]

KINASE_COUNTS = [("Type I", 1425), ("Type I1/2", 394), ("Type II", 190), ("allosteric", 47)]

# Toy two-class set: acyclic chains vs substituted (hetero)aromatics, each
# assembled from a small core/substituent grammar.
TOY_ALIPHATIC_CORES = [
    "CC({a})C{b}", "OCC({a})C{b}", "NCC({a})CC{b}", "CC(C)C({a}){b}", "CCOC({a})C{b}",
    "CC(=O)NC({a})C{b}",
]
TOY_ALIPHATIC_A = ["C", "O", "N", "CC", "CO", "C(=O)O", "OC"]
TOY_ALIPHATIC_B = ["", "O", "N", "C", "CO", "CN", "C(=O)N"]
TOY_AROMATIC_CORES = [
    "c1ccc({a})cc1{b}", "c1cc({a})ccc1{b}", "c1ccncc1{a}", "c1cc({a})cnc1{b}", "c1ccc2ccccc2c1{a}",
]
TOY_AROMATIC_A = ["C", "O", "N", "F", "Cl", "OC", "CC", "C(=O)O", "C#N", "CO"]
TOY_AROMATIC_B = ["", "C", "O", "N", "F", "Cl", "OC"]
TOY_PER_CLASS = 30


def combos(cores, subst_a, subst_b):
    # A bare {b} sits at the end of the string or right before ')', so the
    # substituent continues the chain from the preceding atom; an empty "({b})"
    # branch is dropped.
    out = []
    for core, a, b in itertools.product(cores, subst_a, subst_b):
        text = core.replace("{a}", a)
        text = text.replace("({b})", f"({b})" if b else "").replace("{b}", b)
        out.append(text)
    return out


def unique(items):
    """Drops repeats; with RDKit installed also drops unparseable strings and
    repeats that only differ in spelling."""
    try:
        from rdkit import Chem, RDLogger

        RDLogger.DisableLog("rdApp.*")

        def key(s):
            mol = Chem.MolFromSmiles(s)
            return None if mol is None else Chem.MolToSmiles(mol)
    except ImportError:
        def key(s):
            return s

    seen = set()
    result = []
    for item in items:
        k = key(item)
        if k is None or k in seen:
            continue
        seen.add(k)
        result.append(item)
    return result


def write_pdl1(rng):
    pool = unique(combos(PDL1_CORES, PDL1_SUBST_A, PDL1_SUBST_B))
    rng.shuffle(pool)
    rows = []
    for i, smiles in enumerate(pool[:350]):
        # Heavy right tail of IC50 (nM): log-normal around ~60 nM, a few extreme values.
        log_ic50 = rng.gauss(math.log(60.0), 1.4)
        if i % 59 == 7:
            log_ic50 += rng.choice([-9.0, 9.0])
        rows.append((smiles, f"{math.exp(log_ic50):.6g}"))
    with open(OUT / "pdl1_style.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "ic50_nM"])
        w.writerows(rows)


def write_kinase(rng):
    pool = unique(combos(KINASE_CORES, KINASE_SUBST_A, KINASE_SUBST_B))
    rng.shuffle(pool)
    total = sum(n for _, n in KINASE_COUNTS)
    assert len(pool) >= total, len(pool)
    labels = [name for name, n in KINASE_COUNTS for _ in range(n)]
    rng.shuffle(labels)
    with open(OUT / "kinase_style.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "binding_mode"])
        for smiles, label in zip(pool[:total], labels):
            w.writerow([smiles, label])


def write_toy(rng):
    aliphatic = unique(combos(TOY_ALIPHATIC_CORES, TOY_ALIPHATIC_A, TOY_ALIPHATIC_B))
    aromatic = unique(combos(TOY_AROMATIC_CORES, TOY_AROMATIC_A, TOY_AROMATIC_B))
    rng.shuffle(aliphatic)
    rng.shuffle(aromatic)
    with open(OUT / "toy_2class.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "class"])
        for s in aliphatic[:TOY_PER_CLASS]:
            w.writerow([s, "aliphatic"])
        for s in aromatic[:TOY_PER_CLASS]:
            w.writerow([s, "aromatic"])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write_pdl1(random.Random(350))
    write_kinase(random.Random(2056))
    write_toy(random.Random(60))


if __name__ == "__main__":
    main()
