"""Balanced incomplete block designs: parameter checks, construction and
panellist serving schedules."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DesignError

DEFAULT_NODE_BUDGET = 200_000


@dataclass(frozen=True)
class BIBDParams:
    t: int
    b: int
    h: int
    r: int
    lam: int


@dataclass(frozen=True)
class BIBDLayout:
    params: BIBDParams
    blocks: tuple[tuple[int, ...], ...]

    def replication(self) -> dict[int, int]:
        counts = dict.fromkeys(range(1, self.params.t + 1), 0)
        for blk in self.blocks:
            for x in blk:
                counts[x] += 1
        return counts

    def concurrence(self) -> dict[tuple[int, int], int]:
        counts = dict.fromkeys(combinations(range(1, self.params.t + 1), 2), 0)
        for blk in self.blocks:
            for pair in combinations(sorted(blk), 2):
                counts[pair] += 1
        return counts

    def to_json(self) -> dict:
        p = self.params
        return {"t": p.t, "b": p.b, "h": p.h, "r": p.r, "lambda": p.lam,
                "blocks": [list(blk) for blk in self.blocks]}


def bibd_violations(t: int, b: int, h: int, r: int, allow_complete: bool = False) -> list[str]:
    """Names of the necessary BIBD conditions that ``(t, b, h, r)`` fails."""
    out = []
    if min(t, b, h, r) < 1:
        return ["parameters must be positive integers"]
    if h > t:
        out.append(f"block size exceeds treatments (h={h} > t={t})")
    if r * t != h * b:
        out.append(f"rt ≠ hb ({r * t} ≠ {h * b})")
    if t < 2:
        out.append("need at least 2 treatments")
        return out
    num = r * (h - 1)
    if num % (t - 1):
        out.append(f"non-integer λ (r(h−1)/(t−1) = {num}/{t - 1})")
        lam = num / (t - 1)
    else:
        lam = num // (t - 1)
    complete = allow_complete and h == t
    if r <= lam and not complete:
        out.append(f"r ≤ λ ({r} ≤ {lam:g})")
    if b < t:
        out.append(f"b < t ({b} < {t})")
    return out


def validate_bibd(t: int, b: int, h: int, r: int, allow_complete: bool = False) -> BIBDParams:
    """Check rt = hb, λ(t−1) = r(h−1) with integral λ, r > λ and b ≥ t.

    With ``allow_complete`` a complete block design (h = t, hence r = λ = b)
    is accepted as the degenerate case.
    """
    for name, v in (("t", t), ("b", b), ("h", h), ("r", r)):
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
            raise DesignError(f"{name} must be an integer, got {v!r}")
    bad = bibd_violations(t, b, h, r, allow_complete)
    if bad:
        raise DesignError("not a BIBD: " + "; ".join(bad))
    return BIBDParams(int(t), int(b), int(h), int(r), r * (h - 1) // (t - 1))


def _search(t: int, h: int, lam: int, b: int, r: int, budget: int):
    """Backtracking construction of a (t, h, λ) design with b blocks.

    Blocks are built around the lexicographically first pair that is still
    short of λ; every other member must exceed that pair's larger element,
    since all earlier pairs are already saturated.  Consecutive blocks
    serving the same pair are kept in lexicographic order.  Returns the block list,
    or None when the node budget runs out or the space is exhausted.
    """
    pair = np.zeros((t, t), dtype=np.int64)
    rep = np.zeros(t, dtype=np.int64)
    blocks: list[tuple[int, ...]] = []
    nodes = 0

    class Budget(Exception):
        pass

    def first_deficient():
        for a in range(t):
            for c in range(a + 1, t):
                if pair[a, c] < lam:
                    return a, c
        return None

    def place(blk, delta):
        for x in blk:
            rep[x] += delta
        for x, y in combinations(blk, 2):
            pair[x, y] += delta
            pair[y, x] += delta

    def extend(blk, start):
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise Budget
        if len(blk) == h:
            yield tuple(blk)
            return
        need = h - len(blk)
        for c in range(start, t - need + 1):
            if rep[c] >= r:
                continue
            if all(pair[c, x] < lam for x in blk):
                blk.append(c)
                yield from extend(blk, c + 1)
                blk.pop()

    def solve(prev_target=None):
        target = first_deficient()
        if target is None:
            return len(blocks) == b and bool((rep == r).all())
        if len(blocks) >= b:
            return False
        a, c = target
        if rep[a] >= r or rep[c] >= r:
            return False
        for blk in extend([a, c], c + 1):
            # repeated blocks for the same pair only in non-decreasing order
            if target == prev_target and blk < blocks[-1]:
                continue
            place(blk, +1)
            blocks.append(blk)
            if solve(target):
                return True
            blocks.pop()
            place(blk, -1)
        return False

    try:
        ok = solve()
    except Budget:
        return None
    if not ok:
        return None
    return [tuple(x + 1 for x in blk) for blk in blocks]


def _cyclic_search(t: int, h: int, lam: int, b: int, budget: int):
    """Develop base blocks mod t (a cyclic difference family), if b allows it.

    Base blocks contain 0 and are chosen in non-decreasing order; every
    non-zero difference must arise exactly λ times.
    """
    if b % t:
        return None
    s = b // t
    diff = np.zeros(t, dtype=np.int64)
    bases: list[tuple[int, ...]] = []
    nodes = 0

    def grow(blk, start):
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise OverflowError
        if len(blk) == h:
            yield tuple(blk)
            return
        for c in range(start, t - (h - len(blk)) + 1):
            ok = True
            for x in blk:
                if diff[(c - x) % t] + 1 > lam or diff[(x - c) % t] + 1 > lam:
                    ok = False
                    break
            if ok:
                blk.append(c)
                add_pairs = [(c, x) for x in blk[:-1]]
                for x, y in add_pairs:
                    diff[(x - y) % t] += 1
                    diff[(y - x) % t] += 1
                yield from grow(blk, c + 1)
                for x, y in add_pairs:
                    diff[(x - y) % t] -= 1
                    diff[(y - x) % t] -= 1
                blk.pop()

    def solve():
        if len(bases) == s:
            return bool((diff[1:] == lam).all())
        for blk in grow([0], 1):
            if bases and blk < bases[-1]:
                continue
            bases.append(blk)
            if solve():
                return True
            bases.pop()
        return False

    try:
        if not solve():
            return None
    except OverflowError:
        return None
    return [tuple(sorted((x + i) % t + 1 for x in base)) for base in bases for i in range(t)]


def generate_bibd(t: int, h: int, replications: int = 1,
                  budget: int = DEFAULT_NODE_BUDGET) -> BIBDLayout:
    """BIBD for ``t`` treatments in blocks of ``h``, repeated ``replications``
    times (b, r and λ all scale with it).

    Candidate λ values are tried in increasing order; for each, a cyclic
    construction is attempted before the general backtracking search, both
    bounded by ``budget`` nodes.  The first design found is returned.

    The search is deterministic; randomisation enters only through
    :func:`assign_panellists`.
    """
    if not 2 <= h < t:
        raise DesignError(f"need 2 ≤ h < t, got t={t}, h={h}")
    if replications < 1:
        raise DesignError("replications must be ≥ 1")
    denom = h * (h - 1)
    max_lam = 1
    for k in range(h - 2):
        max_lam = max_lam * (t - 2 - k) // (k + 1)
    for lam in range(1, max_lam + 1):
        if (lam * t * (t - 1)) % denom or (lam * (t - 1)) % (h - 1):
            continue
        b = lam * t * (t - 1) // denom
        r = lam * (t - 1) // (h - 1)
        if bibd_violations(t, b, h, r):
            continue
        blocks = _cyclic_search(t, h, lam, b, budget)
        if blocks is None:
            blocks = _search(t, h, lam, b, r, budget)
        if blocks is not None:
            params = validate_bibd(t, b * replications, h, r * replications)
            return BIBDLayout(params, tuple(blocks) * replications)
    raise DesignError(f"no design found within budget for t={t}, h={h}")


@dataclass(frozen=True)
class Serving:
    panellist: int
    block: int
    order: tuple[int, ...]


def assign_panellists(layout: BIBDLayout, N: int, seed: int | None = 0) -> list[Serving]:
    """Give each of ``N`` panellists one block, served in a random order.

    ``N`` must be a multiple of the number of blocks so every block is used
    equally often.
    """
    b = layout.params.b
    if N < 1 or N % b:
        raise DesignError(f"panellist count {N} is not a multiple of b={b}")
    rng = np.random.default_rng(seed)
    slots = rng.permutation(np.repeat(np.arange(b), N // b))
    out = []
    for p, blk_idx in enumerate(slots, start=1):
        blk = layout.blocks[blk_idx]
        order = tuple(int(blk[i]) for i in rng.permutation(len(blk)))
        out.append(Serving(p, int(blk_idx) + 1, order))
    return out


def write_schedule_csv(schedule: list[Serving], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["panellist", "block", "position", "treatment"])
        for s in schedule:
            for pos, trt in enumerate(s.order, start=1):
                w.writerow([s.panellist, s.block, pos, trt])


def write_layout_json(layout: BIBDLayout, schedule: list[Serving] | None, path) -> None:
    doc = layout.to_json()
    if schedule is not None:
        doc["schedule"] = [{"panellist": s.panellist, "block": s.block, "order": list(s.order)}
                           for s in schedule]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
