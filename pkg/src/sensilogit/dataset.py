"""Ordinal sensory data: ingestion, hedonic-scale collapsing, dummy coding
and contingency tables.

Factor levels are stored as 1-based indices into per-factor registries.  A
dataset is immutable once built.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

FACTORS = ("formulation", "attribute")

NINE_POINT_LABELS = (
    "disliked extremely",
    "disliked very much",
    "disliked moderately",
    "disliked slightly",
    "neither liked nor disliked",
    "liked slightly",
    "liked moderately",
    "liked very much",
    "liked extremely",
)

FIVE_POINT_LABELS = (
    "disliked very or extremely",
    "disliked slightly or moderately",
    "neither liked nor disliked",
    "liked moderately or slightly",
    "liked extremely or very much",
)


@dataclass(frozen=True)
class HedonicScale:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise DataError("a hedonic scale needs at least 2 categories")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("scale labels must be distinct")

    @property
    def J(self) -> int:
        return len(self.labels)

    @classmethod
    def numeric(cls, J: int) -> "HedonicScale":
        if J == 9:
            return cls(NINE_POINT_LABELS)
        if J == 5:
            return cls(FIVE_POINT_LABELS)
        return cls(tuple(str(j) for j in range(1, J + 1)))


@dataclass(frozen=True)
class CollapseMap:
    """Order-preserving surjection from a ``source_J`` to a ``target_J`` scale."""

    source_J: int
    target_J: int
    mapping: Mapping[int, int]

    def __post_init__(self):
        mapping = {int(k): int(v) for k, v in dict(self.mapping).items()}
        object.__setattr__(self, "mapping", mapping)
        missing = [j for j in range(1, self.source_J + 1) if j not in mapping]
        if missing:
            raise DataError(f"collapse map not total: categories {missing} unmapped")
        extra = sorted(set(mapping) - set(range(1, self.source_J + 1)))
        if extra:
            raise DataError(f"collapse map has categories outside 1..{self.source_J}: {extra}")
        bad = sorted({v for v in mapping.values() if not 1 <= v <= self.target_J})
        if bad:
            raise DataError(f"collapse map targets outside 1..{self.target_J}: {bad}")
        unused = sorted(set(range(1, self.target_J + 1)) - set(mapping.values()))
        if unused:
            raise DataError(f"collapse map not surjective: targets {unused} never used")
        images = [mapping[j] for j in range(1, self.source_J + 1)]
        if any(b < a for a, b in zip(images, images[1:])):
            raise DataError("collapse map not monotone (order-preserving)")

    def __call__(self, response: int) -> int:
        return self.mapping[response]

    def as_array(self) -> np.ndarray:
        """Lookup table indexed by source category (index 0 unused)."""
        lut = np.zeros(self.source_J + 1, dtype=np.int64)
        for k, v in self.mapping.items():
            lut[k] = v
        return lut

    @classmethod
    def from_json(cls, obj, target_J: int | None = None) -> "CollapseMap":
        """Build from ``{"9": 5, "8": 5, ...}``, a JSON string, or a path to one."""
        if isinstance(obj, (str, Path)):
            text = str(obj)
            if not text.lstrip().startswith("{"):
                text = Path(obj).read_text(encoding="utf-8")
            obj = json.loads(text)
        try:
            mapping = {int(k): int(v) for k, v in obj.items()}
        except (TypeError, ValueError) as exc:
            raise DataError(f"collapse map entries must be integers: {exc}") from None
        if not mapping:
            raise DataError("empty collapse map")
        return cls(max(mapping), target_J or max(mapping.values()), mapping)


NINE_TO_FIVE = CollapseMap(9, 5, {9: 5, 8: 5, 7: 4, 6: 4, 5: 3, 4: 2, 3: 2, 2: 1, 1: 1})


@dataclass(frozen=True)
class Observation:
    panellist: str
    formulation: int
    attribute: int
    response: int


@dataclass(frozen=True)
class OrdinalDataset:
    observations: tuple[Observation, ...]
    scale: HedonicScale
    formulations: tuple[str, ...]
    attributes: tuple[str, ...]
    panellists: tuple[str, ...] = ()

    def __post_init__(self):
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "formulations", tuple(self.formulations))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.panellists:
            seen = dict.fromkeys(o.panellist for o in obs)
            object.__setattr__(self, "panellists", tuple(seen))
        else:
            object.__setattr__(self, "panellists", tuple(self.panellists))
        for name in ("formulations", "attributes"):
            reg = getattr(self, name)
            if not reg:
                raise DataError(f"empty {name} registry")
            if len(set(reg)) != len(reg):
                raise DataError(f"duplicate levels in {name} registry")
        T, L, J = len(self.formulations), len(self.attributes), self.scale.J
        known = set(self.panellists)
        seen = set()
        for o in obs:
            if o.panellist not in known:
                raise DataError(f"unregistered panellist {o.panellist!r}")
            if not 1 <= o.formulation <= T:
                raise DataError(f"formulation index {o.formulation} outside 1..{T}")
            if not 1 <= o.attribute <= L:
                raise DataError(f"attribute index {o.attribute} outside 1..{L}")
            if not 1 <= o.response <= J:
                raise DataError(f"response out of range: {o.response} not in 1..{J}")
            key = (o.panellist, o.formulation, o.attribute)
            if key in seen:
                raise DataError(
                    "duplicate (panellist, formulation, attribute) triple: "
                    f"({o.panellist}, {self.formulations[o.formulation - 1]}, "
                    f"{self.attributes[o.attribute - 1]})"
                )
            seen.add(key)

    def __len__(self):
        return len(self.observations)

    @property
    def T(self) -> int:
        return len(self.formulations)

    @property
    def L(self) -> int:
        return len(self.attributes)

    @property
    def J(self) -> int:
        return self.scale.J

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Column arrays: ``panellist`` (0-based registry index) and 1-based
        ``formulation``, ``attribute``, ``response``."""
        pidx = {p: i for i, p in enumerate(self.panellists)}
        obs = self.observations
        return {
            "panellist": np.array([pidx[o.panellist] for o in obs], dtype=np.int64),
            "formulation": np.array([o.formulation for o in obs], dtype=np.int64),
            "attribute": np.array([o.attribute for o in obs], dtype=np.int64),
            "response": np.array([o.response for o in obs], dtype=np.int64),
        }

    def levels(self, factor: str) -> tuple[str, ...]:
        if factor == "formulation":
            return self.formulations
        if factor == "attribute":
            return self.attributes
        raise DataError(f"unknown factor {factor!r}")

    def level_index(self, factor: str, level) -> int:
        """1-based index of ``level`` (a registered name or a 1-based int)."""
        reg = self.levels(factor)
        return resolve_level(reg, level, factor)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for key in ("panellist", "formulation", "attribute", "response"):
            h.update(self.arrays[key].tobytes())
        h.update(json.dumps([self.formulations, self.attributes, self.panellists,
                             self.scale.labels]).encode())
        return h.hexdigest()[:16]

    def select_attribute(self, attribute) -> "OrdinalDataset":
        """Observations of a single attribute, with a one-level attribute registry."""
        a = self.level_index("attribute", attribute)
        obs = tuple(
            Observation(o.panellist, o.formulation, 1, o.response)
            for o in self.observations
            if o.attribute == a
        )
        panels = tuple(dict.fromkeys(o.panellist for o in obs))
        return OrdinalDataset(obs, self.scale, self.formulations,
                              (self.attributes[a - 1],), panels)


def resolve_level(registry: Sequence[str], level, factor: str = "factor") -> int:
    if isinstance(level, (int, np.integer)) and not isinstance(level, bool):
        if 1 <= level <= len(registry):
            return int(level)
        raise DataError(f"unknown {factor} level index {level}")
    try:
        return registry.index(str(level)) + 1
    except ValueError:
        raise DataError(f"unknown {factor} level {level!r}") from None


@dataclass(frozen=True)
class CsvSchema:
    panellist: str = "panellist"
    formulation: str = "formulation"
    attribute: str | None = "attribute"
    response: str = "response"
    J: int = 5
    formulation_order: tuple[str, ...] | None = None
    attribute_order: tuple[str, ...] | None = None
    scale_labels: tuple[str, ...] | None = None


def load_csv(path, schema: CsvSchema | None = None) -> OrdinalDataset:
    """Read a long-format CSV (one row per evaluation) into an OrdinalDataset.

    Level registries follow first appearance in the file unless
    ``schema.formulation_order`` / ``schema.attribute_order`` pin them.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = [schema.panellist, schema.formulation, schema.response]
        if schema.attribute:
            wanted.append(schema.attribute)
        for col in wanted:
            if col not in header:
                raise DataError(f"missing column {col!r} in {path.name}")
        rows = list(reader)

    def registry(col, order):
        if order is not None:
            return tuple(str(x) for x in order)
        return tuple(dict.fromkeys(r[col].strip() for r in rows))

    formulations = registry(schema.formulation, schema.formulation_order)
    if schema.attribute:
        attributes = registry(schema.attribute, schema.attribute_order)
    else:
        attributes = ("all",)
    scale = (HedonicScale(schema.scale_labels) if schema.scale_labels
             else HedonicScale.numeric(schema.J))

    obs = []
    for lineno, r in enumerate(rows, start=2):
        raw = r[schema.response].strip()
        try:
            resp = int(raw)
        except ValueError:
            raise DataError(f"line {lineno}: unparsable response {raw!r}") from None
        if not 1 <= resp <= scale.J:
            raise DataError(f"line {lineno}: response out of range ({resp} not in 1..{scale.J})")
        f = resolve_level(formulations, r[schema.formulation].strip(), "formulation")
        a = (resolve_level(attributes, r[schema.attribute].strip(), "attribute")
             if schema.attribute else 1)
        obs.append(Observation(r[schema.panellist].strip(), f, a, resp))
    return OrdinalDataset(tuple(obs), scale, formulations, attributes)


def write_csv(ds: OrdinalDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["panellist", "formulation", "attribute", "response"])
        for o in ds.observations:
            w.writerow([o.panellist, ds.formulations[o.formulation - 1],
                        ds.attributes[o.attribute - 1], o.response])


def collapse_scale(ds: OrdinalDataset, cmap: CollapseMap,
                   labels: Sequence[str] | None = None) -> OrdinalDataset:
    if cmap.source_J != ds.scale.J:
        raise DataError(f"collapse map is for a {cmap.source_J}-point scale, "
                        f"data use {ds.scale.J} points")
    scale = HedonicScale(tuple(labels)) if labels else HedonicScale.numeric(cmap.target_J)
    if scale.J != cmap.target_J:
        raise DataError("target labels do not match target_J")
    obs = tuple(Observation(o.panellist, o.formulation, o.attribute, cmap(o.response))
                for o in ds.observations)
    return OrdinalDataset(obs, scale, ds.formulations, ds.attributes, ds.panellists)


@dataclass(frozen=True)
class DesignMatrix:
    """Treatment-coded indicators, one block of columns per factor.

    Columns of a block are the factor's non-reference levels in registry order.
    """

    blocks: dict[str, np.ndarray]
    references: dict[str, str]
    columns: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.blocks[f] for f in FACTORS if f in self.blocks])

    @property
    def column_labels(self) -> list[str]:
        return [f"{f}:{c}" for f in FACTORS if f in self.blocks for c in self.columns[f]]

    def decode(self, row: int) -> dict[str, str]:
        out = {}
        for f, block in self.blocks.items():
            hits = np.flatnonzero(block[row])
            out[f] = self.columns[f][hits[0]] if len(hits) else self.references[f]
        return out


def dummy_encode(ds: OrdinalDataset, refs: Mapping[str, object] | None = None) -> DesignMatrix:
    """Treatment (reference-cell) coding of formulation and attribute.

    ``refs`` maps factor name to its reference level (name or 1-based index);
    the first registered level is the default.
    """
    refs = dict(refs or {})
    unknown = set(refs) - set(FACTORS)
    if unknown:
        raise DataError(f"unknown factor(s) in references: {sorted(unknown)}")
    blocks, references, columns = {}, {}, {}
    for f in FACTORS:
        reg = ds.levels(f)
        ref = resolve_level(reg, refs.get(f, 1), f)
        keep = [i for i in range(1, len(reg) + 1) if i != ref]
        codes = ds.arrays[f]
        block = np.zeros((len(ds), len(keep)))
        for c, lev in enumerate(keep):
            block[codes == lev, c] = 1.0
        blocks[f] = block
        references[f] = reg[ref - 1]
        columns[f] = tuple(reg[i - 1] for i in keep)
    return DesignMatrix(blocks, references, columns)


def contingency_table(ds: OrdinalDataset, attribute) -> np.ndarray:
    """T x J counts of responses per formulation for one attribute."""
    a = ds.level_index("attribute", attribute)
    arr = ds.arrays
    mask = arr["attribute"] == a
    table = np.zeros((ds.T, ds.J), dtype=np.int64)
    np.add.at(table, (arr["formulation"][mask] - 1, arr["response"][mask] - 1), 1)
    return table
