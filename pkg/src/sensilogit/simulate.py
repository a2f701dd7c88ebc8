"""Scenario simulation and concordance between unified and per-attribute fits.

A scenario fixes an acceptance ordering of three formulations, written in
ascending order of acceptance with ``<`` and ``=`` (``"F3<F1<F2"``: F3 is
liked least, F2 most).  Responses are drawn from a proportional-odds
random-intercept model whose formulation slopes encode the ordering; each
replicate is then analysed by the unified model (formulation + attribute)
and by one model per attribute, and the ordering each of them implies is
compared with the truth.

How an ordering is read off a fit is a convention of this package; see
:func:`infer_order`.
"""
from __future__ import annotations

import csv
import json
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import FIVE_POINT_LABELS, HedonicScale, Observation, OrdinalDataset
from .errors import ConfigError, FitError
from .inference import chi2_sf, norm_sf2
from .mixed import MixedOptions, fit_mixed
from .model import FittedModel, ModelData, ModelSpec, ParamVector, Term, category_probs
from .predict import acceptance_score

DEFAULT_ALPHA = (-2.0, -0.7, 0.7, 2.0)
DEFAULT_GAP = 1.0
DEFAULT_SIGMA_U = 1.0
DEFAULT_ATTRIBUTE_EFFECT = 0.3
DEFAULT_REPLICATES = 200

DEFAULT_SCENARIOS = (
    "F3<F1<F2", "F1<F3<F2", "F2=F3<F1", "F2<F3<F1", "F3<F2<F1", "F1=F2=F3", "F1=F2<F3",
    "F1<F2=F3", "F1<F2<F3", "F2<F1=F3", "F2<F1<F3", "F3=F1<F2", "F3<F1=F2",
)

_TOKEN = re.compile(r"F(\d+)")


def parse_pattern(pattern: str, T: int | None = None) -> list[list[int]]:
    """Groups of 1-based formulation indices in ascending acceptance.

    ``"F2=F3<F1"`` gives ``[[2, 3], [1]]``.
    """
    s = pattern.replace(" ", "")
    if not s:
        raise ConfigError("empty ordering pattern")
    groups = []
    for grp in s.split("<"):
        members = []
        for tok in grp.split("="):
            m = _TOKEN.fullmatch(tok)
            if not m:
                raise ConfigError(f"bad formulation token {tok!r} in pattern {pattern!r}")
            members.append(int(m.group(1)))
        groups.append(members)
    flat = [x for g in groups for x in g]
    T = T or max(flat)
    if sorted(flat) != list(range(1, T + 1)):
        raise ConfigError(f"pattern {pattern!r} must name F1..F{T} exactly once each")
    return groups


def canonical_pattern(pattern: str) -> str:
    """Sort members of each tie group so equal orderings compare equal."""
    return "<".join("=".join(f"F{i}" for i in sorted(g)) for g in parse_pattern(pattern))


@dataclass(frozen=True)
class ScenarioSpec:
    pattern: str
    N: int = 90
    T: int = 3
    L: int = 2
    J: int = 5
    gap: float = DEFAULT_GAP
    sigma_u: float = DEFAULT_SIGMA_U
    alpha: tuple[float, ...] = DEFAULT_ALPHA
    attribute_effect: float = DEFAULT_ATTRIBUTE_EFFECT
    replicates: int = DEFAULT_REPLICATES
    master_seed: int = 0

    def __post_init__(self):
        parse_pattern(self.pattern, self.T)
        if len(self.alpha) != self.J - 1 or np.any(np.diff(self.alpha) <= 0):
            raise ConfigError("alpha must hold J-1 increasing cutpoints")
        if self.N < 1 or self.replicates < 0 or self.L < 1:
            raise ConfigError("N and L must be positive and replicates non-negative")
        if self.gap <= 0 or self.sigma_u < 0:
            raise ConfigError("gap must be positive and sigma_u non-negative")

    @property
    def ranks(self) -> np.ndarray:
        """0-based acceptance rank of each formulation (ties share a rank)."""
        r = np.zeros(self.T)
        for k, grp in enumerate(parse_pattern(self.pattern, self.T)):
            for f in grp:
                r[f - 1] = k
        return r

    @property
    def true_params(self) -> ParamVector:
        """Proportional-odds parameters encoding the ordering.

        A more accepted formulation needs a smaller slope (it lowers
        ``P(Y <= j)``), so ``beta_t = -gap * (rank_t - rank_1)``.
        """
        r = self.ranks
        beta = -self.gap * (r[1:] - r[0])
        terms = [Term("formulation", self.T, True)]
        slopes = [beta]
        if self.L > 1:
            terms.append(Term("attribute", self.L, True))
            slopes.append(np.full(self.L - 1, self.attribute_effect))
        spec = ModelSpec(self.J, tuple(terms), True)
        return ParamVector(spec, np.asarray(self.alpha, float), tuple(slopes),
                           float(np.log(self.sigma_u)) if self.sigma_u > 0 else -np.inf)


def _panellist_rng(scenario: ScenarioSpec, replicate: int, panellist: int):
    seq = np.random.SeedSequence([scenario.master_seed, replicate, panellist])
    return np.random.default_rng(seq)


def simulate_dataset(scenario: ScenarioSpec, replicate_index: int) -> OrdinalDataset:
    """One complete-block panel: every panellist rates every formulation on
    every attribute."""
    p = scenario.true_params
    T, L, J = scenario.T, scenario.L, scenario.J
    cells = [(t, a) for t in range(1, T + 1) for a in range(1, L + 1)]
    base = []
    for t, a in cells:
        row = {"formulation": np.eye(T)[t - 1, 1:]}
        if L > 1:
            row["attribute"] = np.eye(L)[a - 1, 1:]
        base.append(row)
    obs = []
    for i in range(scenario.N):
        rng = _panellist_rng(scenario, replicate_index, i)
        u = scenario.sigma_u * rng.standard_normal()
        draws = rng.random(len(cells))
        for (t, a), row, v in zip(cells, base, draws):
            cum = np.cumsum(category_probs(p, row, u).probs)
            y = int(np.searchsorted(cum[:-1], v, side="right")) + 1
            obs.append(Observation(f"P{i + 1}", t, a, y))
    labels = FIVE_POINT_LABELS if J == 5 else tuple(str(j) for j in range(1, J + 1))
    return OrdinalDataset(tuple(obs), HedonicScale(labels),
                          tuple(f"F{t}" for t in range(1, T + 1)),
                          tuple(chr(ord("A") + k) for k in range(L)),
                          tuple(f"P{i + 1}" for i in range(scenario.N)))


def _pairwise(fit: FittedModel):
    """Wald p-value for every pair of formulations (1-based)."""
    spec = fit.spec
    T = spec.term("formulation").n_levels
    labels = fit.labels
    start = labels.index(next(lab for lab in labels if lab.startswith("formulation[")))
    width = spec.K * (T - 1) if not spec.term("formulation").proportional else T - 1
    idx = np.arange(start, start + width)
    est = fit.estimates[idx]
    V = fit.vcov[np.ix_(idx, idx)]
    if not np.all(np.isfinite(V)):
        raise FitError("formulation covariance not available")
    prop = spec.term("formulation").proportional
    K = 1 if prop else spec.K
    p = {}
    for s in range(1, T + 1):
        for t in range(s + 1, T + 1):
            C = np.zeros((K, width))
            for k in range(K):
                if s > 1:
                    C[k, (s - 2) if prop else k * (T - 1) + s - 2] = -1.0
                C[k, (t - 2) if prop else k * (T - 1) + t - 2] = 1.0
            d = C @ est
            W = C @ V @ C.T
            if K == 1:
                if not W[0, 0] > 0:
                    raise FitError("non-positive contrast variance")
                p[(s, t)] = norm_sf2(d[0] / np.sqrt(W[0, 0]))
            else:
                stat = float(d @ np.linalg.solve(W, d))
                p[(s, t)] = chi2_sf(stat, K)
    return p


def infer_order(fit: FittedModel, alpha_level: float = 0.05) -> str:
    """Acceptance ordering implied by a fit.

    Formulations are sorted by attribute-mean acceptance score
    (``P(Y >= 4)`` at ``u = 0``; for proportional slopes this is the order
    of ``-beta``).  Walking up that order, a formulation joins the current
    tie group when its Wald contrast with every member is non-significant
    at ``alpha_level``; otherwise it opens a new group (``<``).  A tie group
    is therefore always mutually non-significant, and an all-equal
    ordering is reported only when no pair differs.
    """
    if not fit.converged:
        raise FitError(f"fit not converged ({fit.convergence.status})")
    T = fit.spec.term("formulation").n_levels
    pv = _pairwise(fit)
    thr = min(4, fit.spec.J)
    scores = acceptance_score(fit, thr, averaging="conditional").mean
    order = sorted(range(1, T + 1), key=lambda f: (scores[f - 1], f))
    groups = [[order[0]]]
    for f in order[1:]:
        if all(pv[(min(f, g), max(f, g))] >= alpha_level for g in groups[-1]):
            groups[-1].append(f)
        else:
            groups.append([f])
    return "<".join("=".join(f"F{i}" for i in sorted(g)) for g in groups)


@dataclass(frozen=True)
class ReplicateOutcome:
    replicate: int
    unified: str | None
    per_attribute: tuple[str | None, ...]
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenarioResult:
    pattern: str
    N: int
    replicates: int
    concordant: tuple[int, ...]  # unified, attribute A, attribute B, ...
    failures: tuple[int, ...]
    outcomes: tuple[ReplicateOutcome, ...] = field(default=(), repr=False)

    def rates(self) -> tuple[float, ...]:
        """Concordance among converged fits (NaN when none converged)."""
        return tuple(c / (self.replicates - f) if self.replicates > f else float("nan")
                     for c, f in zip(self.concordant, self.failures))

    def sensitivity_rates(self) -> tuple[float, ...]:
        """Concordance with failed fits counted as discordant."""
        return tuple(c / self.replicates if self.replicates else float("nan")
                     for c in self.concordant)


@dataclass(frozen=True)
class ConcordanceReport:
    scenarios: tuple[ScenarioResult, ...]
    model_names: tuple[str, ...]
    settings: dict = field(default_factory=dict)

    def to_rows(self) -> list[list[str]]:
        head = ["scenario", "N", "replicates"]
        head += [f"rate_{m}" for m in self.model_names]
        head += [f"failures_{m}" for m in self.model_names]
        head += [f"rate_{m}_failures_discordant" for m in self.model_names]
        rows = [head]
        for s in self.scenarios:
            rows.append([s.pattern, str(s.N), str(s.replicates)]
                        + [_fmt(r) for r in s.rates()] + [str(f) for f in s.failures]
                        + [_fmt(r) for r in s.sensitivity_rates()])
        return rows

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.to_rows())

    def to_json(self) -> dict:
        return {
            "models": list(self.model_names),
            "settings": self.settings,
            "scenarios": [{
                "pattern": s.pattern, "N": s.N, "replicates": s.replicates,
                "concordant": dict(zip(self.model_names, s.concordant)),
                "failures": dict(zip(self.model_names, s.failures)),
                "rates": dict(zip(self.model_names, _nan_none(s.rates()))),
                "rates_failures_discordant": dict(zip(self.model_names,
                                                      _nan_none(s.sensitivity_rates()))),
                "replicate_detail": [{"replicate": o.replicate, "unified": o.unified,
                                      "per_attribute": list(o.per_attribute),
                                      "errors": list(o.errors)} for o in s.outcomes],
            } for s in self.scenarios],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def _fmt(x: float) -> str:
    return "NA" if not np.isfinite(x) else f"{x:.4f}"


def _nan_none(xs):
    return [None if not np.isfinite(x) else float(x) for x in xs]


def _safe_order(spec, data, opts, alpha_level):
    try:
        fit = fit_mixed(spec, data, opts)
        if not fit.vcov_ok:
            raise FitError("information matrix not positive definite")
        return infer_order(fit, alpha_level), None
    except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_replicate(scenario: ScenarioSpec, replicate: int, alpha_level: float = 0.05,
                  quad_order: int = 10) -> ReplicateOutcome:
    """Simulate one panel and infer orderings from every model."""
    import warnings

    from .errors import ConvergenceWarning

    ds = simulate_dataset(scenario, replicate)
    opts = MixedOptions(quad_order=quad_order)
    errors = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        spec = ModelSpec.unified(scenario.J, scenario.T, scenario.L, True, True)
        unified, err = _safe_order(spec, ModelData.from_dataset(ds), opts, alpha_level)
        if err:
            errors.append(f"unified: {err}")
        single = ModelSpec.unified(scenario.J, scenario.T, 1, True, True)
        per = []
        for a in ds.attributes:
            o, err = _safe_order(single, ModelData.from_dataset(ds.select_attribute(a)), opts,
                                 alpha_level)
            per.append(o)
            if err:
                errors.append(f"attribute {a}: {err}")
    return ReplicateOutcome(replicate, unified, tuple(per), tuple(errors))


def _run_scenario_chunk(args):
    scenario, reps, alpha_level, quad_order = args
    return [run_replicate(scenario, r, alpha_level, quad_order) for r in reps]


def concordance_study(scenarios, *, alpha_level: float = 0.05, quad_order: int = 10,
                      workers: int = 1, progress=None) -> ConcordanceReport:
    """Concordance of inferred with true orderings for each scenario.

    Replicate ``r`` of a scenario always uses the same random streams, so
    results do not depend on ``workers`` or on execution order.
    """
    scenarios = list(scenarios)
    L = scenarios[0].L if scenarios else 2
    names = ("unified",) + tuple(f"attribute_{chr(ord('A') + k)}" for k in range(L))
    results = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for sc in scenarios:
            if sc.L != L:
                raise ConfigError("all scenarios in a study need the same number of attributes")
            t0 = time.perf_counter()
            reps = list(range(sc.replicates))
            if pool is not None and reps:
                chunks = [reps[k::workers] for k in range(workers)]
                outs = [o for part in pool.map(_run_scenario_chunk,
                                               [(sc, c, alpha_level, quad_order) for c in chunks])
                        for o in part]
                outs.sort(key=lambda o: o.replicate)
            else:
                outs = _run_scenario_chunk((sc, reps, alpha_level, quad_order))
            truth = canonical_pattern(sc.pattern)
            conc = [0] * len(names)
            fail = [0] * len(names)
            for o in outs:
                for k, inferred in enumerate((o.unified,) + o.per_attribute):
                    if inferred is None:
                        fail[k] += 1
                    elif inferred == truth:
                        conc[k] += 1
            results.append(ScenarioResult(sc.pattern, sc.N, sc.replicates, tuple(conc),
                                          tuple(fail), tuple(outs)))
            if progress:
                progress(sc, results[-1], time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown()
    settings = {}
    if scenarios:
        s0 = scenarios[0]
        settings = {"alpha_level": alpha_level, "quad_order": quad_order, "gap": s0.gap,
                    "sigma_u": s0.sigma_u, "alpha": list(s0.alpha),
                    "attribute_effect": s0.attribute_effect, "master_seed": s0.master_seed}
    return ConcordanceReport(tuple(results), names, settings)


def default_scenarios(N: int = 90, replicates: int = DEFAULT_REPLICATES, master_seed: int = 0,
                      **kw) -> list[ScenarioSpec]:
    return [ScenarioSpec(p, N=N, replicates=replicates, master_seed=master_seed, **kw)
            for p in DEFAULT_SCENARIOS]


def scaled(scenario: ScenarioSpec, factor: float) -> ScenarioSpec:
    return replace(scenario, gap=scenario.gap * factor)


def simulate_panel(params: ParamVector, schedule, formulations, attributes,
                   seed: int = 0, J_labels=None) -> OrdinalDataset:
    """Responses for a served block design under arbitrary model parameters.

    ``schedule`` is a list of :class:`~sensilogit.design.Serving`; every
    panellist rates each served formulation on every attribute.  Streams
    are keyed on ``(seed, panellist)``.
    """
    spec = params.spec
    T, L = len(formulations), len(attributes)
    obs = []
    for s in schedule:
        rng = np.random.default_rng(np.random.SeedSequence([seed, s.panellist]))
        u = params.sigma_u * rng.standard_normal()
        for t in s.order:
            for a in range(1, L + 1):
                row = {"formulation": np.eye(T)[t - 1, 1:]}
                if spec.has("attribute"):
                    # reference attribute is the last level
                    row["attribute"] = np.eye(L)[a - 1, :-1]
                pi = category_probs(params, row, u).probs
                if np.any(pi < 0):
                    raise FitError(f"parameters give negative probabilities for F{t}, "
                                   f"attribute {attributes[a - 1]}")
                y = int(np.searchsorted(np.cumsum(pi)[:-1], rng.random(), side="right")) + 1
                obs.append(Observation(f"P{s.panellist}", t, a, y))
    labels = J_labels or (FIVE_POINT_LABELS if spec.J == 5 else
                          tuple(str(j) for j in range(1, spec.J + 1)))
    return OrdinalDataset(tuple(obs), HedonicScale(tuple(labels)), tuple(formulations),
                          tuple(attributes), tuple(f"P{s.panellist}" for s in schedule))
