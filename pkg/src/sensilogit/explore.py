"""Correspondence analysis for exploratory screening of ordinal panels."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import OrdinalDataset
from .errors import DataError

DEFAULT_AXES = 2


@dataclass(frozen=True, eq=False)
class CAResult:
    row_coords: np.ndarray  # (I, n_axes) principal coordinates
    col_coords: np.ndarray  # (J, n_axes)
    singular_values: np.ndarray  # all non-trivial axes, descending
    inertia_share: np.ndarray  # share of total inertia for the retained axes
    total_inertia: float
    n: float
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()
    col_types: tuple[str, ...] = field(default=())

    @property
    def n_axes(self) -> int:
        return self.row_coords.shape[1]


def correspondence_analysis(table, n_axes: int = DEFAULT_AXES, row_labels=None,
                            col_labels=None) -> CAResult:
    """Simple correspondence analysis of a two-way count table.

    Axis signs are fixed so that the first row point with a non-zero
    coordinate on an axis lies on its positive side.
    """
    N = np.asarray(table, dtype=float)
    if N.ndim != 2 or N.size == 0:
        raise DataError("correspondence analysis needs a non-empty two-way table")
    if np.any(N < 0) or not np.all(np.isfinite(N)):
        raise DataError("table entries must be non-negative counts")
    n = N.sum()
    P = N / n
    r, c = P.sum(1), P.sum(0)
    for kind, m in (("row", r), ("column", c)):
        zero = np.flatnonzero(m == 0)
        if len(zero):
            raise DataError(f"zero {kind} margin at {kind} {int(zero[0]) + 1}")
    S = (P - np.outer(r, c)) / np.sqrt(np.outer(r, c))
    U, sv, Vt = np.linalg.svd(S, full_matrices=False)
    k = min(N.shape) - 1  # the trivial axis is removed by centring
    sv, U, V = sv[:k], U[:, :k], Vt[:k].T
    total = float(np.sum(S ** 2))
    if total < 1e-12:  # same cut-off as chisq_association
        total = 0.0
    # numerical noise axes
    sv = np.where(sv > 1e-12 * max(1.0, sv[0] if len(sv) else 0.0), sv, 0.0)
    F = (U / np.sqrt(r)[:, None]) * sv
    G = (V / np.sqrt(c)[:, None]) * sv
    for a in range(k):
        nz = np.flatnonzero(np.abs(F[:, a]) > 1e-12)
        if len(nz) and F[nz[0], a] < 0:
            F[:, a] *= -1
            G[:, a] *= -1
    m = min(n_axes, k)
    rc = np.zeros((N.shape[0], n_axes))
    cc = np.zeros((N.shape[1], n_axes))
    rc[:, :m], cc[:, :m] = F[:, :m], G[:, :m]
    share = np.zeros(n_axes)
    if total > 0:
        share[:m] = sv[:m] ** 2 / total
    rl = tuple(row_labels) if row_labels is not None else tuple(str(i + 1) for i in range(N.shape[0]))
    cl = tuple(col_labels) if col_labels is not None else tuple(str(j + 1) for j in range(N.shape[1]))
    return CAResult(rc, cc, sv, share, total, float(n), rl, cl)


def indicator_matrix(ds: OrdinalDataset) -> tuple[np.ndarray, list[str], list[str]]:
    """Disjunctive coding of formulation, attribute and response per evaluation."""
    if not ds.observations:
        raise DataError("dataset is empty")
    arr = ds.arrays
    blocks, labels, types = [], [], []
    for factor, codes, names in (("formulation", arr["formulation"], ds.formulations),
                                 ("attribute", arr["attribute"], ds.attributes),
                                 ("category", arr["response"],
                                  tuple(str(j) for j in range(1, ds.J + 1)))):
        Z = np.zeros((len(codes), len(names)))
        Z[np.arange(len(codes)), codes - 1] = 1.0
        blocks.append(Z)
        labels += list(names)
        types += [factor] * len(names)
    return np.hstack(blocks), labels, types


def mca_coordinates(ds: OrdinalDataset, n_axes: int = DEFAULT_AXES) -> CAResult:
    """Multiple correspondence analysis as CA of the indicator matrix.

    Levels that never occur are dropped with a warning.  Column points
    (formulations, attributes, response categories) are the quantities of
    interest; row points are individual evaluations.
    """
    Z, labels, types = indicator_matrix(ds)
    used = Z.sum(0) > 0
    if not used.all():
        missing = [f"{t} {lab}" for lab, t, u in zip(labels, types, used) if not u]
        warnings.warn("dropping unobserved levels: " + ", ".join(missing), stacklevel=2)
    Z = Z[:, used]
    labels = [lab for lab, u in zip(labels, used) if u]
    types = [t for t, u in zip(types, used) if u]
    res = correspondence_analysis(Z, n_axes, col_labels=labels)
    return CAResult(res.row_coords, res.col_coords, res.singular_values, res.inertia_share,
                    res.total_inertia, res.n, res.row_labels, res.col_labels, tuple(types))


def write_coords_csv(res: CAResult, path, include_rows: bool = False,
                     row_type: str = "formulation", col_type: str = "category") -> None:
    """Plot-ready coordinates: label, axis1, axis2, type."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "axis1", "axis2", "type"])
        if include_rows:
            for lab, xy in zip(res.row_labels, res.row_coords):
                w.writerow([lab, f"{xy[0]:.10f}", f"{xy[1] if len(xy) > 1 else 0.0:.10f}", row_type])
        types = res.col_types or (col_type,) * len(res.col_labels)
        for lab, xy, t in zip(res.col_labels, res.col_coords, types):
            w.writerow([lab, f"{xy[0]:.10f}", f"{xy[1] if len(xy) > 1 else 0.0:.10f}", t])
