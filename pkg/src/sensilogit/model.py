"""Cumulative-logit models with formulation and attribute factors.

For response categories 1..J and cutpoint index j = 1..J-1 the model is

    logit P(Y <= j | F, A, u) = alpha_j + beta_j . F + delta_j . A + u

with treatment-coded factor indicators ``F`` and ``A``.  Each factor term is
either proportional (one slope vector shared by every j) or
non-proportional (a separate row per j).  ``u`` is the panellist random
intercept, zero for fixed-effect models.

Flat parameter order: ``alpha`` (J-1), then each term's slopes in term order
(row-major by cutpoint when non-proportional), then ``log_sigma_u`` when
the model has a random intercept.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logit

from . import kernels
from .dataset import FACTORS, OrdinalDataset, dummy_encode
from .errors import ConvergenceWarning, DataError
from .optimize import covariance, maximize

SLOPE_GUARD = 30.0


@dataclass(frozen=True)
class Term:
    name: str
    n_levels: int
    proportional: bool = True

    @property
    def n_cols(self) -> int:
        return self.n_levels - 1


@dataclass(frozen=True)
class ModelSpec:
    J: int
    terms: tuple[Term, ...] = ()
    random_intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.J < 2:
            raise ValueError("J must be at least 2")
        names = [t.name for t in self.terms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate terms in {names}")
        for t in self.terms:
            if t.name not in FACTORS:
                raise ValueError(f"unknown term {t.name!r}; expected one of {FACTORS}")
            if t.n_levels < 1:
                raise ValueError(f"term {t.name!r} needs at least one level")

    @classmethod
    def unified(cls, J: int, T: int, L: int, proportional: bool = True,
                random_intercept: bool = False) -> "ModelSpec":
        terms = [Term("formulation", T, proportional)]
        if L > 1:
            terms.append(Term("attribute", L, proportional))
        return cls(J, tuple(terms), random_intercept)

    @property
    def K(self) -> int:
        return self.J - 1

    def has(self, name: str) -> bool:
        return any(t.name == name for t in self.terms)

    def term(self, name: str) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def slope_shape(self, term: Term) -> tuple[int, ...]:
        return (term.n_cols,) if term.proportional else (self.K, term.n_cols)

    @property
    def n_params(self) -> int:
        n = self.K + sum(int(np.prod(self.slope_shape(t))) for t in self.terms)
        return n + int(self.random_intercept)

    @property
    def proportional(self) -> bool:
        return all(t.proportional for t in self.terms)

    def without(self, name: str) -> "ModelSpec":
        self.term(name)
        return replace(self, terms=tuple(t for t in self.terms if t.name != name))

    def with_odds(self, proportional: bool) -> "ModelSpec":
        return replace(self, terms=tuple(replace(t, proportional=proportional)
                                         for t in self.terms))

    def with_random_intercept(self, flag: bool) -> "ModelSpec":
        return replace(self, random_intercept=flag)

    def nested_in(self, other: "ModelSpec") -> bool:
        """True when every model of ``self`` is a special case of ``other``."""
        if self.J != other.J:
            return False
        if self.random_intercept and not other.random_intercept:
            return False
        for t in self.terms:
            if not other.has(t.name):
                return False
            o = other.term(t.name)
            if o.n_levels != t.n_levels:
                return False
            if not t.proportional and o.proportional:
                return False
        return True

    def labels(self, columns: Mapping[str, Sequence[str]] | None = None) -> list[str]:
        out = [f"alpha[{j}]" for j in range(1, self.J)]
        for t in self.terms:
            cols = list(columns[t.name]) if columns else [str(c) for c in range(2, t.n_levels + 1)]
            if t.proportional:
                out += [f"{t.name}[{c}]" for c in cols]
            else:
                out += [f"{t.name}[{j},{c}]" for j in range(1, self.J) for c in cols]
        if self.random_intercept:
            out.append("log_sigma_u")
        return out

    def to_json(self) -> dict:
        return {"J": self.J, "random_intercept": self.random_intercept,
                "terms": [{"name": t.name, "n_levels": t.n_levels,
                           "proportional": t.proportional} for t in self.terms]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "ModelSpec":
        return cls(int(doc["J"]), tuple(Term(t["name"], int(t["n_levels"]), bool(t["proportional"]))
                                        for t in doc["terms"]),
                   bool(doc["random_intercept"]))


@dataclass(frozen=True, eq=False)
class ParamVector:
    spec: ModelSpec
    alpha: np.ndarray
    slopes: tuple[np.ndarray, ...] = ()
    log_sigma_u: float | None = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (self.spec.K,):
            raise ValueError(f"dimension mismatch: alpha has shape {alpha.shape}, "
                             f"expected ({self.spec.K},)")
        object.__setattr__(self, "alpha", alpha)
        slopes = tuple(np.asarray(s, dtype=float) for s in self.slopes)
        if len(slopes) != len(self.spec.terms):
            raise ValueError(f"dimension mismatch: {len(slopes)} slope blocks for "
                             f"{len(self.spec.terms)} terms")
        for t, s in zip(self.spec.terms, slopes):
            if s.shape != self.spec.slope_shape(t):
                raise ValueError(f"dimension mismatch: {t.name} slopes have shape {s.shape}, "
                                 f"expected {self.spec.slope_shape(t)}")
        object.__setattr__(self, "slopes", slopes)
        if self.spec.random_intercept and self.log_sigma_u is None:
            raise ValueError("random-intercept model needs log_sigma_u")
        if not self.spec.random_intercept and self.log_sigma_u is not None:
            raise ValueError("log_sigma_u given for a model without random intercept")

    @classmethod
    def zeros(cls, spec: ModelSpec, alpha=None, log_sigma_u: float = 0.0) -> "ParamVector":
        a = np.arange(spec.K) - (spec.K - 1) / 2 if alpha is None else alpha
        return cls(spec, a, tuple(np.zeros(spec.slope_shape(t)) for t in spec.terms),
                   log_sigma_u if spec.random_intercept else None)

    def pack(self) -> np.ndarray:
        parts = [self.alpha] + [s.ravel() for s in self.slopes]
        if self.spec.random_intercept:
            parts.append([self.log_sigma_u])
        return np.concatenate(parts)

    @classmethod
    def unpack(cls, spec: ModelSpec, vec) -> "ParamVector":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.n_params,):
            raise ValueError(f"dimension mismatch: got {vec.shape[0]} values, "
                             f"spec needs {spec.n_params}")
        pos = spec.K
        slopes = []
        for t in spec.terms:
            shape = spec.slope_shape(t)
            size = int(np.prod(shape))
            slopes.append(vec[pos:pos + size].reshape(shape))
            pos += size
        lsu = float(vec[pos]) if spec.random_intercept else None
        return cls(spec, vec[:spec.K].copy(), tuple(slopes), lsu)

    def slope(self, name: str) -> np.ndarray | None:
        for t, s in zip(self.spec.terms, self.slopes):
            if t.name == name:
                return s
        return None

    @property
    def beta(self):
        return self.slope("formulation")

    @property
    def delta(self):
        return self.slope("attribute")

    @property
    def sigma_u(self) -> float:
        return 0.0 if self.log_sigma_u is None else float(np.exp(self.log_sigma_u))

    def slope_matrix(self, name: str) -> np.ndarray:
        """Slopes of term ``name`` as a (J-1) x p matrix."""
        s = self.slope(name)
        if s is None:
            raise KeyError(name)
        return np.broadcast_to(s, (self.spec.K, s.shape[-1])) if s.ndim == 1 else s


@dataclass(frozen=True, eq=False)
class ModelData:
    """Observations prepared for likelihood evaluation, grouped by panellist.

    ``blocks`` holds the treatment-coded indicator matrix of every factor;
    a model spec selects the ones it uses.
    """

    y: np.ndarray
    blocks: Mapping[str, np.ndarray]
    offsets: np.ndarray
    J: int
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    references: Mapping[str, str] = field(default_factory=dict)
    columns: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    panellists: tuple[str, ...] = ()
    fingerprint: str = ""

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_groups(self) -> int:
        return len(self.offsets) - 1

    @property
    def group_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_groups), np.diff(self.offsets))

    @classmethod
    def from_dataset(cls, ds: OrdinalDataset, refs: Mapping[str, object] | None = None) -> "ModelData":
        dm = dummy_encode(ds, refs)
        arr = ds.arrays
        order = np.argsort(arr["panellist"], kind="stable")
        pid = arr["panellist"][order]
        present, starts = np.unique(pid, return_index=True)
        offsets = np.append(starts, len(pid)).astype(np.int64)
        blocks = {f: np.ascontiguousarray(dm.blocks[f][order]) for f in FACTORS}
        return cls(
            y=arr["response"][order].copy(), blocks=blocks, offsets=offsets, J=ds.J,
            levels={f: ds.levels(f) for f in FACTORS}, references=dict(dm.references),
            columns=dict(dm.columns), panellists=tuple(ds.panellists[i] for i in present),
            fingerprint=ds.fingerprint() + ":" + json.dumps(dm.references, sort_keys=True),
        )

    @classmethod
    def from_arrays(cls, y, blocks: Mapping[str, np.ndarray], J: int,
                    groups=None) -> "ModelData":
        y = np.asarray(y, dtype=np.int64)
        n = len(y)
        groups = np.arange(n) if groups is None else np.asarray(groups)
        order = np.argsort(groups, kind="stable")
        g = groups[order]
        _, starts = np.unique(g, return_index=True)
        offsets = np.append(starts, n).astype(np.int64) if n else np.zeros(1, dtype=np.int64)
        bl = {k: np.ascontiguousarray(np.asarray(v, dtype=float).reshape(n, -1)[order])
              for k, v in blocks.items()}
        levels = {k: tuple(str(i) for i in range(1, v.shape[1] + 2)) for k, v in bl.items()}
        columns = {k: lv[1:] for k, lv in levels.items()}
        h = hashlib.sha256(y[order].tobytes())
        for k in sorted(bl):
            h.update(k.encode() + bl[k].tobytes())
        h.update(g.tobytes())
        return cls(y[order], bl, offsets, J, levels, {k: lv[0] for k, lv in levels.items()},
                   columns, tuple(str(x) for x in np.unique(g)), h.hexdigest()[:16])

    def check(self, spec: ModelSpec) -> None:
        if spec.J != self.J:
            raise DataError(f"dimension mismatch: model J={spec.J}, data J={self.J}")
        for t in spec.terms:
            if t.name not in self.blocks:
                raise DataError(f"data have no {t.name!r} factor")
            if t.n_cols == 0:
                raise DataError(f"{t.name} has a single level; dummy coding gives zero columns")
            if self.blocks[t.name].shape[1] != t.n_cols:
                raise DataError(f"dimension mismatch: {t.name} has "
                                f"{self.blocks[t.name].shape[1] + 1} levels in data, "
                                f"{t.n_levels} in model")


def as_model_data(data) -> ModelData:
    if isinstance(data, ModelData):
        return data
    if isinstance(data, OrdinalDataset):
        return ModelData.from_dataset(data)
    raise TypeError(f"expected ModelData or OrdinalDataset, got {type(data).__name__}")


def linear_predictor(params: ParamVector, data: ModelData) -> np.ndarray:
    """(n, J-1) matrix of cumulative logits without the random intercept."""
    eta = np.tile(params.alpha, (data.n, 1))
    for t, s in zip(params.spec.terms, params.slopes):
        X = data.blocks[t.name]
        if s.ndim == 1:
            eta += (X @ s)[:, None]
        else:
            eta += X @ s.T
    return eta


def eta_gradient(params: ParamVector, data: ModelData, D: np.ndarray) -> np.ndarray:
    """Pull a d/d(eta) matrix back to the fixed-effect parameters."""
    parts = [D.sum(axis=0)]
    for t, s in zip(params.spec.terms, params.slopes):
        X = data.blocks[t.name]
        if s.ndim == 1:
            parts.append(X.T @ D.sum(axis=1))
        else:
            parts.append((D.T @ X).ravel())
    return np.concatenate(parts)


def _row_vector(params: ParamVector, row) -> dict[str, np.ndarray]:
    spec = params.spec
    if isinstance(row, Mapping):
        out = {}
        for t in spec.terms:
            x = np.asarray(row.get(t.name, np.zeros(t.n_cols)), dtype=float)
            if x.shape != (t.n_cols,):
                raise ValueError(f"dimension mismatch for {t.name}: {x.shape}")
            out[t.name] = x
        return out
    x = np.asarray(row, dtype=float).ravel()
    need = sum(t.n_cols for t in spec.terms)
    if x.shape != (need,):
        raise ValueError(f"dimension mismatch: row has {x.size} entries, model needs {need}")
    out, pos = {}, 0
    for t in spec.terms:
        out[t.name] = x[pos:pos + t.n_cols]
        pos += t.n_cols
    return out


def cumulative_logits(params: ParamVector, row, u: float = 0.0) -> np.ndarray:
    xs = _row_vector(params, row)
    eta = params.alpha + u
    for t in params.spec.terms:
        eta = eta + params.slope_matrix(t.name) @ xs[t.name]
    return eta


def cumulative_probs(params: ParamVector, row, u: float = 0.0) -> np.ndarray:
    """P(Y <= j), j = 1..J-1, for one covariate row (flat indicators or a
    per-term mapping) and random-intercept value ``u``."""
    return expit(cumulative_logits(params, row, u))


class CategoryProbs(NamedTuple):
    probs: np.ndarray
    valid: bool  # False when a non-proportional fit gives decreasing cumulative probabilities


def category_probs(params: ParamVector, row, u: float = 0.0) -> CategoryProbs:
    theta = cumulative_probs(params, row, u)
    pi = np.diff(np.concatenate(([0.0], theta, [1.0])))
    return CategoryProbs(pi, bool(np.all(pi >= 0)))


def _fixed_eval(params: ParamVector, data: ModelData):
    data.check(params.spec)
    eta = linear_predictor(params, data)
    ll, D, nfloor = kernels.fixed_loglik_grad(eta, data.y)
    return ll, eta_gradient(params, data, D), nfloor


def loglik_fixed(params: ParamVector, data) -> float:
    """Sum of log category probabilities (floored at 1e-300)."""
    data = as_model_data(data)
    ll, _, nfloor = _fixed_eval(params, data)
    if nfloor:
        warnings.warn(f"{nfloor} observation probabilities floored at 1e-300", RuntimeWarning,
                      stacklevel=2)
    return ll


def gradient_fixed(params: ParamVector, data) -> np.ndarray:
    data = as_model_data(data)
    g = _fixed_eval(params, data)[1]
    if params.spec.random_intercept:
        g = np.append(g, 0.0)
    return g


def invalid_rows(params: ParamVector, data: ModelData, u: float = 0.0) -> int:
    """Observations whose covariates give a negative category probability."""
    eta = linear_predictor(params, data)
    if eta.shape[1] < 2:
        return 0
    return int(np.count_nonzero((np.diff(eta, axis=1) < 0).any(axis=1)))


def empirical_cutpoints(y: np.ndarray, J: int) -> np.ndarray:
    counts = np.bincount(y, minlength=J + 1)[1:] + 0.5
    cum = np.cumsum(counts)[:-1] / counts.sum()
    return logit(cum)


@dataclass(frozen=True)
class Convergence:
    iterations: int
    grad_norm: float
    status: str  # converged | max_iter | separation | boundary
    newton_steps: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "boundary")


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    params: ParamVector
    loglik: float
    vcov: np.ndarray
    n_obs: int
    convergence: Convergence
    data_fingerprint: str = ""
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    references: Mapping[str, str] = field(default_factory=dict)
    columns: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    n_floored: int = 0
    n_invalid: int = 0
    vcov_ok: bool = True
    quad_order: int | None = None
    fixed: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return self.convergence.ok

    @property
    def estimates(self) -> np.ndarray:
        return self.params.pack()

    @property
    def se(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.vcov))

    @property
    def labels(self) -> list[str]:
        return self.spec.labels(self.columns or None)

    @property
    def n_params(self) -> int:
        return self.spec.n_params - len(self.fixed)

    @property
    def sigma_u(self) -> float:
        return self.params.sigma_u

    def sigma_u_se(self) -> float:
        """Delta-method standard error of sigma_u."""
        if not self.spec.random_intercept:
            return float("nan")
        return float(self.sigma_u * self.se[-1])

    def to_json(self) -> dict:
        est = self.estimates
        se = self.se
        doc = {
            "spec": self.spec.to_json(),
            "packing_order": self.labels,
            "estimates": {lab: float(v) for lab, v in zip(self.labels, est)},
            "standard_errors": {lab: (None if not np.isfinite(s) else float(s))
                                for lab, s in zip(self.labels, se)},
            "loglik": float(self.loglik),
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "convergence": {"iterations": self.convergence.iterations,
                            "grad_norm": float(self.convergence.grad_norm),
                            "status": self.convergence.status,
                            "newton_steps": self.convergence.newton_steps},
            "diagnostics": {"floored_probabilities": self.n_floored,
                            "invalid_probability_rows": self.n_invalid,
                            "vcov_positive_definite": self.vcov_ok,
                            "warnings": list(self.warnings)},
            "levels": {k: list(v) for k, v in self.levels.items()},
            "references": dict(self.references),
            "vcov": [[None if not np.isfinite(v) else float(v) for v in row] for row in self.vcov],
            "data_fingerprint": self.data_fingerprint,
        }
        if self.spec.random_intercept:
            doc["sigma_u"] = self.sigma_u
            doc["quad_order"] = self.quad_order
        if self.fixed:
            doc["fixed"] = list(self.fixed)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "FittedModel":
        spec = ModelSpec.from_json(doc["spec"])
        labels = doc["packing_order"]
        vec = np.array([doc["estimates"][lab] for lab in labels])
        vcov = np.array([[np.nan if v is None else v for v in row] for row in doc["vcov"]])
        conv = doc["convergence"]
        levels = {k: tuple(v) for k, v in doc.get("levels", {}).items()}
        refs = dict(doc.get("references", {}))
        columns = {k: tuple(x for x in v if x != refs.get(k)) for k, v in levels.items()}
        diag = doc.get("diagnostics", {})
        return cls(spec, ParamVector.unpack(spec, vec), float(doc["loglik"]), vcov,
                   int(doc["n_obs"]),
                   Convergence(conv["iterations"], conv["grad_norm"], conv["status"],
                               conv.get("newton_steps", 0)),
                   doc.get("data_fingerprint", ""), levels, refs, columns,
                   diag.get("floored_probabilities", 0), diag.get("invalid_probability_rows", 0),
                   diag.get("vcov_positive_definite", True), doc.get("quad_order"),
                   tuple(doc.get("fixed", ())), tuple(diag.get("warnings", ())))


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 1000
    grad_tol: float = 1e-6
    initializer: ParamVector | None = None
    polish: bool = True


def initial_params(spec: ModelSpec, data: ModelData, log_sigma_u: float = 0.0) -> ParamVector:
    """Empirical marginal cumulative logits for the cutpoints, zero slopes."""
    return ParamVector.zeros(spec, empirical_cutpoints(data.y, spec.J), log_sigma_u)


def _apply_guard(spec, x, status, notes):
    """Cap runaway slopes (complete separation) at +-SLOPE_GUARD."""
    slope_part = x[spec.K:spec.n_params - int(spec.random_intercept)]
    if np.any(np.abs(slope_part) > SLOPE_GUARD) or np.any(np.abs(x[:spec.K]) > SLOPE_GUARD):
        notes.append(f"separation: estimates exceeded |{SLOPE_GUARD:g}| and were capped")
        x = x.copy()
        x[:spec.n_params - int(spec.random_intercept)] = np.clip(
            x[:spec.n_params - int(spec.random_intercept)], -SLOPE_GUARD, SLOPE_GUARD)
        x[:spec.K] = np.sort(x[:spec.K])
        status = "separation"
    return x, status


def build_fit(spec: ModelSpec, data: ModelData, res, *, objective, notes: list[str],
              quad_order=None, fixed_names=(), boundary=False) -> FittedModel:
    x = res.x
    status = "converged" if res.converged else "max_iter"
    x, status = _apply_guard(spec, x, status, notes)
    if status == "separation":
        ll = objective(x)[0]
    else:
        ll = res.loglik
    if boundary and status == "converged":
        status = "boundary"
    V, ok = covariance(res.hessian, res.free_idx, spec.n_params)
    params = ParamVector.unpack(spec, x)
    n_invalid = 0 if spec.proportional else invalid_rows(params, data)
    nfloor = kernels.fixed_loglik_grad(linear_predictor(params, data), data.y)[2]
    if n_invalid:
        notes.append(f"{n_invalid} observations have negative category probabilities")
    if status in ("max_iter", "separation"):
        warnings.warn(f"fit did not converge cleanly ({status}); gradient norm "
                      f"{res.grad_norm:.3g}", ConvergenceWarning, stacklevel=3)
    return FittedModel(
        spec=spec, params=params, loglik=float(ll), vcov=V, n_obs=data.n,
        convergence=Convergence(res.iterations, res.grad_norm, status, res.newton_steps,
                                res.message),
        data_fingerprint=data.fingerprint, levels=dict(data.levels),
        references=dict(data.references), columns=dict(data.columns), n_floored=nfloor,
        n_invalid=n_invalid, vcov_ok=ok, quad_order=quad_order, fixed=tuple(fixed_names),
        warnings=tuple(notes),
    )


def fit_fixed(spec: ModelSpec, data, opts: FitOptions | None = None) -> FittedModel:
    """Maximum-likelihood fit of a model without random intercept."""
    if spec.random_intercept:
        raise ValueError("fit_fixed handles fixed-effect models; use mixed.fit_mixed")
    opts = opts or FitOptions()
    data = as_model_data(data)
    data.check(spec)
    start = opts.initializer or initial_params(spec, data)
    if start.spec != spec:
        raise ValueError("initializer does not match the model spec")

    def objective(x):
        ll, g, _ = _fixed_eval(ParamVector.unpack(spec, x), data)
        return ll, g

    res = maximize(objective, start.pack(), spec.K, max_iter=opts.max_iter,
                   grad_tol=opts.grad_tol, polish=opts.polish)
    return build_fit(spec, data, res, objective=objective, notes=[])
