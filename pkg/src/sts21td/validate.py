"""Exact double-counting checks and per-stratum comparison with the published census."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

PUBLISHED_TOTAL_PAIRS = 101473423278637842432000000
LATIN_SQUARES_6 = 812851200
STS9_LABELED = 840
STS9_WITH_TRIPLE = 120

# (tau6, sigma9) -> |Aut| -> (classes, resolvable classes)
TABLE1: dict[tuple[int, int], dict[int, tuple[int, int]]] = {
    (7, 7): {6: (1, 1), 8: (1, 0), 9: (1, 1), 12: (1, 1), 14: (1, 0), 16: (1, 0), 18: (2, 1),
             54: (1, 0), 108: (1, 0), 504: (1, 0), 1008: (1, 1)},
    (3, 3): {1: (98, 0), 2: (45, 0), 3: (37, 0), 4: (18, 0), 6: (31, 0), 8: (7, 0), 12: (6, 0), 16: (2, 0)},
    (3, 1): {1: (171, 0), 2: (36, 0), 3: (66, 0), 4: (14, 0), 6: (45, 0), 8: (1, 0), 9: (9, 0), 12: (8, 0),
             18: (3, 0), 36: (1, 0), 72: (1, 0)},
    (1, 3): {1: (101621, 355), 2: (5271, 14), 3: (103, 8), 4: (321, 1), 6: (24, 1), 8: (60, 5), 12: (5, 0),
             16: (9, 1), 18: (1, 0), 24: (7, 3), 36: (1, 0), 48: (2, 0), 72: (1, 0), 144: (1, 0)},
    (1, 1): {1: (1865036, 0), 2: (30771, 0), 3: (52, 0), 4: (786, 0), 6: (8, 0), 8: (23, 0), 12: (5, 0),
             24: (1, 0)},
}

STRATA = {
    "tau7": ((7, 7),),
    "tau3plus": ((7, 7), (3, 3), (3, 1)),
    "full": ((7, 7), (3, 3), (3, 1), (1, 3), (1, 1)),
}
# pipeline mode names map onto the strata they produce
STRATUM_OF_MODE = {"tau_eq_7": "tau7", "tau_ge_3": "tau3plus", "full": "full"}


def total_pairs_formula() -> int:
    """Pairs (STS(21) on a fixed 21-set, sub-TD(3,6)) counted through flowers."""
    denom = math.factorial(3) ** 2 * math.factorial(6) ** 3
    partitions, rem = divmod(math.factorial(21), denom)
    if rem:
        raise ArithmeticError("flower partition count is not an integer")
    parts = STS9_WITH_TRIPLE ** 3 + 3 * (STS9_LABELED - STS9_WITH_TRIPLE) * STS9_WITH_TRIPLE ** 2
    return partitions * parts * LATIN_SQUARES_6


def weighted_class_sum(records: Iterable) -> int:
    """Sum of tau6 * 21! / |Aut| over class records, with exact division."""
    f21 = math.factorial(21)
    total = 0
    for r in records:
        q, rem = divmod(f21, r.aut_order)
        if rem:
            raise ArithmeticError(f"|Aut|={r.aut_order} does not divide 21!; corrupted record")
        total += r.tau6 * q
    return total


def table1_records(stratum: str = "full") -> list:
    """Synthetic (tau6, sigma9, aut_order, resolvable) rows reproducing the published table."""
    from .assembler import ClassificationRecord

    out = []
    for key in STRATA[stratum]:
        for aut, (n, res) in TABLE1[key].items():
            for i in range(n):
                out.append(ClassificationRecord("", key[0], key[1], aut, i < res, ()))
    return out


@dataclass
class ConsistencyReport:
    stratum: str
    classes: int
    mismatches: list[str] = field(default_factory=list)
    incomplete: bool = False

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.incomplete

    def text(self) -> str:
        head = f"stratum {self.stratum}: {self.classes} classes"
        if self.ok:
            return head + ", matches the published census"
        lines = [head] + [f"  mismatch: {m}" for m in self.mismatches]
        if self.incomplete:
            lines.append("  incomplete: some records lack a resolvability flag")
        return "\n".join(lines)


def partial_consistency(records: Iterable, stratum: str) -> ConsistencyReport:
    """Compare per-(tau6, sigma9, |Aut|) class and resolvable counts with the table."""
    stratum = STRATUM_OF_MODE.get(stratum, stratum)
    if stratum not in STRATA:
        raise ValueError(f"unknown stratum {stratum!r}")
    records = list(records)
    keys = STRATA[stratum]
    got: Counter = Counter()
    got_res: Counter = Counter()
    incomplete = False
    for r in records:
        got[(r.tau6, r.sigma9, r.aut_order)] += 1
        if r.resolvable is None:
            incomplete = True
        elif r.resolvable:
            got_res[(r.tau6, r.sigma9, r.aut_order)] += 1
    rep = ConsistencyReport(stratum, len(records), incomplete=incomplete)
    want_total = sum(n for k in keys for n, _ in TABLE1[k].values())
    if len(records) != want_total:
        rep.mismatches.append(f"{len(records)} classes, expected {want_total}")
    for (t, s, a) in sorted(got):
        if (t, s) not in keys:
            rep.mismatches.append(f"{got[(t, s, a)]} classes with tau6={t}, sigma9={s} outside the stratum")
    for key in keys:
        for aut, (n, res) in sorted(TABLE1[key].items()):
            k3 = (*key, aut)
            if got[k3] != n:
                rep.mismatches.append(f"tau6={key[0]} sigma9={key[1]} |Aut|={aut}: {got[k3]} classes, expected {n}")
            if not incomplete and got_res[k3] != res:
                rep.mismatches.append(
                    f"tau6={key[0]} sigma9={key[1]} |Aut|={aut}: {got_res[k3]} resolvable, expected {res}")
        for (t, s, a) in sorted(got):
            if (t, s) == key and a not in TABLE1[key]:
                rep.mismatches.append(f"tau6={t} sigma9={s} |Aut|={a}: {got[(t, s, a)]} classes, expected 0")
    if stratum == "full":
        ws = weighted_class_sum(records)
        if ws != total_pairs_formula():
            rep.mismatches.append(f"weighted class sum {ws} != {total_pairs_formula()}")
    return rep
