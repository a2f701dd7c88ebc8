"""Command-line interface.

``sensilogit fit|simulate|design|explore|report --config run.json [--seed N] [--out DIR]``

Every run is driven by one JSON config; ``--seed`` and ``--out`` override
the top-level ``seed`` and ``out`` fields.  Numeric artifacts are
deterministic given the config and inputs; the wall-clock time and
package version go to ``metadata.json`` only.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .dataset import CollapseMap, CsvSchema, collapse_scale, contingency_table, load_csv
from .design import (assign_panellists, generate_bibd, validate_bibd,
                     write_layout_json, write_schedule_csv)
from .errors import ConfigError, ConvergenceWarning, DataError, FitError, SensilogitError
from .explore import mca_coordinates, write_coords_csv
from .inference import (chisq_association, format_p, lrt, test_covariate, wald_tests)
from .mixed import (MixedOptions, fit_mixed, profile_ci_sigma, write_profile_csv)
from .model import FitOptions, FittedModel, ModelData, ModelSpec, Term, fit_fixed
from .predict import (observed_vs_predicted, prediction_table, rank_scores,
                      write_observed_vs_predicted)
from .simulate import DEFAULT_SCENARIOS, ScenarioSpec, concordance_study


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Strict):
    path: str
    panellist: str = "panellist"
    formulation: str = "formulation"
    attribute: Optional[str] = "attribute"
    response: str = "response"
    J: int = Field(5, ge=2, description="points on the scale as recorded")
    collapse: Optional[dict[str, int]] = None
    formulation_order: Optional[list[str]] = None
    attribute_order: Optional[list[str]] = None
    references: dict[str, str] = Field(default_factory=dict)


class ModelConfig(_Strict):
    terms: list[Literal["formulation", "attribute"]] = ["formulation", "attribute"]
    odds: Literal["test", "proportional", "non-proportional"] = "test"
    random_intercept: bool = True


class FitOptionsConfig(_Strict):
    quad_order: int = Field(15, ge=1, le=101)
    grad_tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(1000, ge=1)
    alpha_level: float = Field(0.05, gt=0, lt=1)
    ci_level: float = Field(0.95, gt=0, lt=1)
    threshold: int = Field(4, ge=2)
    averaging: Literal["population", "conditional"] = "population"
    prediction_quad_order: int = Field(41, ge=1, le=101)


class FitConfig(_Strict):
    command: Optional[Literal["fit"]] = None
    seed: int = 0
    out: str = "out"
    data: DataConfig
    model: ModelConfig = ModelConfig()
    options: FitOptionsConfig = FitOptionsConfig()


class SimulateConfig(_Strict):
    command: Optional[Literal["simulate"]] = None
    seed: int = 0
    out: str = "out"
    scenarios: list[str] = list(DEFAULT_SCENARIOS)
    N: Union[int, list[int]] = 90
    replicates: int = Field(200, ge=0)
    gap: float = Field(1.0, gt=0)
    sigma_u: float = Field(1.0, ge=0)
    alpha: list[float] = [-2.0, -0.7, 0.7, 2.0]
    attribute_effect: float = 0.3
    n_attributes: int = Field(2, ge=1)
    alpha_level: float = Field(0.05, gt=0, lt=1)
    quad_order: int = Field(10, ge=1, le=101)
    workers: int = Field(1, ge=1)
    max_failure_rate: float = Field(0.05, ge=0, le=1)


class DesignConfig(_Strict):
    command: Optional[Literal["design"]] = None
    seed: int = 0
    out: str = "out"
    t: int
    h: int
    b: Optional[int] = None
    r: Optional[int] = None
    panellists: Optional[int] = None
    allow_complete: bool = False
    budget: int = Field(200_000, ge=1)


class ExploreConfig(_Strict):
    command: Optional[Literal["explore"]] = None
    seed: int = 0
    out: str = "out"
    data: DataConfig
    n_axes: int = Field(2, ge=1)


class ReportConfig(_Strict):
    command: Optional[Literal["report"]] = None
    seed: int = 0
    out: str = "out"
    fit: str
    threshold: int = Field(4, ge=2)
    averaging: Literal["population", "conditional"] = "population"
    quad_order: int = Field(41, ge=1, le=101)


CONFIGS = {"fit": FitConfig, "simulate": SimulateConfig, "design": DesignConfig,
           "explore": ExploreConfig, "report": ReportConfig}


def load_config(command: str, path, seed: int | None = None, out: str | None = None):
    """Read and validate a run config; unknown keys are rejected by name."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["out"] = out
    try:
        cfg = CONFIGS[command].model_validate(doc)
    except ValidationError as exc:
        msgs = []
        for e in exc.errors():
            loc = ".".join(str(x) for x in e["loc"])
            if e["type"] == "extra_forbidden":
                msgs.append(f"unknown key {loc!r}")
            else:
                msgs.append(f"{loc}: {e['msg']}")
        raise ConfigError("invalid config: " + "; ".join(msgs)) from None
    base = p.parent
    for section in ("data",):
        sub = getattr(cfg, section, None)
        if sub is not None and not Path(sub.path).is_absolute():
            sub.path = str(base / sub.path)
    if command == "report" and not Path(cfg.fit).is_absolute():
        cfg.fit = str(base / cfg.fit)
    return cfg


# ---------------------------------------------------------------- helpers


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False,
                               default=_json_default) + "\n", encoding="utf-8")


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _load_data(dc: DataConfig):
    schema = CsvSchema(dc.panellist, dc.formulation, dc.attribute, dc.response, dc.J,
                       tuple(dc.formulation_order) if dc.formulation_order else None,
                       tuple(dc.attribute_order) if dc.attribute_order else None)
    ds = load_csv(dc.path, schema)
    if dc.collapse:
        ds = collapse_scale(ds, CollapseMap.from_json(dc.collapse))
    return ds


class Stage:
    """Prefix errors raised inside a pipeline step with the step's name."""

    def __init__(self, name: str, log: list[str]):
        self.name = name
        self.log = log

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is None:
            self.log.append(f"{self.name}: ok")
            return False
        if isinstance(exc, SensilogitError):
            exc.args = (f"[{self.name}] {exc}",)
        elif isinstance(exc, (np.linalg.LinAlgError, FloatingPointError)):
            raise FitError(f"[{self.name}] {exc}") from exc
        return False


def _metadata(out: Path, command: str, cfg, started: float) -> None:
    _dump({"command": command, "version": __version__,
           "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
           "elapsed_seconds": round(time.time() - started, 3),
           "config": cfg.model_dump()}, out / "metadata.json")


# ---------------------------------------------------------------- fit


def _spec_for(ds, mc: ModelConfig, proportional: bool) -> ModelSpec:
    terms = []
    for name in mc.terms:
        n = ds.T if name == "formulation" else ds.L
        if name == "attribute" and n < 2:
            continue
        terms.append(Term(name, n, proportional))
    if not terms:
        raise ConfigError("model needs at least one term with two or more levels")
    return ModelSpec(ds.J, tuple(terms), mc.random_intercept)


def cmd_fit(cfg: FitConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.options
    log: list[str] = []
    tests: dict = {}

    def fitter(spec, data):
        if spec.random_intercept:
            return fit_mixed(spec, data, MixedOptions(quad_order=o.quad_order,
                                                      max_iter=o.max_iter, grad_tol=o.grad_tol))
        return fit_fixed(spec, data, FitOptions(max_iter=o.max_iter, grad_tol=o.grad_tol))

    def save_tests():
        _dump(_clean(tests), out / "tests.json")

    with Stage("load data", log):
        ds = _load_data(cfg.data)
        if o.threshold > ds.J:
            raise ConfigError(f"threshold {o.threshold} exceeds the {ds.J}-point scale")
        data = ModelData.from_dataset(ds, cfg.data.references or None)

    with Stage("chi-square association", log):
        tests["association"] = {a: chisq_association(contingency_table(ds, a)).to_json()
                                for a in ds.attributes}

    proportional = cfg.model.odds != "non-proportional"
    fits: dict[bool, FittedModel] = {}
    if cfg.model.odds == "test" and ds.J >= 3:
        with Stage("proportionality test", log):
            spec0 = _spec_for(ds, cfg.model, True)
            fits[True] = fitter(spec0, data)
            fits[False] = fitter(spec0.with_odds(False), data)
            res = lrt(fits[True], fits[False], name="proportional odds")
            tests["proportionality"] = res.to_json()
            proportional = res.p_value >= o.alpha_level
            tests["proportionality"]["decision"] = ("proportional" if proportional
                                                    else "non-proportional")
        save_tests()

    spec = _spec_for(ds, cfg.model, proportional)
    full = fits.get(proportional)

    with Stage("covariate tests", log):
        if full is None:
            full = fitter(spec, data)
        tests["covariates"] = {t.name: test_covariate(data, spec, t.name, fitter, full).to_json()
                               for t in spec.terms}
    save_tests()

    ci = None
    if spec.random_intercept:
        with Stage("random-effect profile", log):
            fixed = fitter(spec.with_random_intercept(False), data)
            tests["random_effect"] = lrt(fixed, full, boundary=True,
                                         name="panellist random intercept").to_json()
            ci = profile_ci_sigma(full, data, o.ci_level,
                                  MixedOptions(quad_order=o.quad_order, max_iter=o.max_iter,
                                               grad_tol=o.grad_tol))
            tests["sigma_u_ci"] = ci.to_json()
            write_profile_csv(ci.trace, out / "profile.csv", full.loglik)
        save_tests()

    with Stage("final model", log):
        if not full.converged:
            raise FitError(f"final model did not converge ({full.convergence.status})")
        _dump(_clean(full.to_json()), out / "fit.json")
        try:
            tests["wald"] = [w.to_json() for w in wald_tests(full)]
        except FitError as exc:
            tests["wald_error"] = str(exc)
        save_tests()

    with Stage("predictions", log):
        tab = prediction_table(full, o.averaging, o.threshold, o.prediction_quad_order)
        tab.write_csv(out / "predictions.csv")
        write_observed_vs_predicted(
            observed_vs_predicted(full, ds, o.averaging, o.prediction_quad_order),
            out / "observed_vs_predicted.csv")

    with Stage("ranking", log):
        ranking = rank_scores(tab.formulations, tab.attribute_mean)
        _dump([{"rank": r.rank, "formulation": r.formulation, "score": r.score,
                "tied": r.tied} for r in ranking], out / "ranking.json")

    (out / "summary.txt").write_text(_fit_summary(ds, spec, full, tests, ci, tab, ranking, o),
                                     encoding="utf-8")
    return 0


def _fit_summary(ds, spec, fit, tests, ci, tab, ranking, o) -> str:
    L = []
    L.append("Ordinal acceptance analysis")
    L.append("=" * 27)
    L.append(f"observations {len(ds)}, panellists {len(ds.panellists)}, formulations {ds.T}, "
             f"attributes {ds.L}, scale 1..{ds.J}")
    L.append("")
    L.append("Association between formulation and response (chi-square)")
    for a, r in tests.get("association", {}).items():
        L.append(f"  {a}: X2 = {r['statistic']:.4g}, df = {r['df']}, p {_pp(r['p_value'])}")
    if "proportionality" in tests:
        r = tests["proportionality"]
        L.append("")
        L.append(f"Proportional odds: LR = {r['statistic']:.4g}, df = {r['df']}, "
                 f"p {_pp(r['p_value'])} -> {r['decision']} model")
    L.append("")
    L.append("Covariate effects (likelihood ratio)")
    for name, r in tests.get("covariates", {}).items():
        L.append(f"  {name}: LR = {r['statistic']:.4g}, df = {r['df']}, p {_pp(r['p_value'])}")
    if ci is not None:
        L.append("")
        r = tests["random_effect"]
        L.append(f"Panellist random intercept: sigma_u = {fit.sigma_u:.4g}, "
                 f"{int(round(100 * ci.level))}% profile CI ({ci.lower:.4g}; {ci.upper:.4g})"
                 + (" [lower end at boundary]" if ci.lower_open else "")
                 + (" [upper end open]" if ci.upper_open else ""))
        L.append(f"  LR vs no random effect = {r['statistic']:.4g} ({r['df']}), "
                 f"p {_pp(r['p_value'])}; interval "
                 + ("contains" if ci.contains_zero else "excludes") + " zero")
    L.append("")
    L.append(f"Final model: {_describe(spec)}")
    L.append(f"  log-likelihood {fit.loglik:.6f}, {fit.n_params} parameters, "
             f"status {fit.convergence.status}")
    L.append("")
    L.append(f"Acceptance P(Y >= {o.threshold}) ({tab.averaging}-averaged), attribute mean")
    for r in ranking:
        L.append(f"  {r.rank:2d}. {r.formulation}: {r.score:.3f}" + (" (tie)" if r.tied else ""))
    top = ", ".join(r.formulation for r in ranking[:3])
    L.append("")
    L.append(f"Most accepted: {top}; least accepted: {ranking[-1].formulation}")
    return "\n".join(L) + "\n"


def _pp(p: float) -> str:
    s = format_p(p)
    return s if s.startswith("<") else f"= {s}"


def _describe(spec: ModelSpec) -> str:
    odds = "proportional" if spec.proportional else "non-proportional"
    kind = "mixed" if spec.random_intercept else "fixed-effect"
    return f"{kind} {odds}-odds cumulative logit with " + ", ".join(t.name for t in spec.terms)


# ---------------------------------------------------------------- simulate


def cmd_simulate(cfg: SimulateConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    Ns = cfg.N if isinstance(cfg.N, list) else [cfg.N]
    scen = [ScenarioSpec(p, N=n, L=cfg.n_attributes, J=len(cfg.alpha) + 1, gap=cfg.gap,
                         sigma_u=cfg.sigma_u, alpha=tuple(cfg.alpha),
                         attribute_effect=cfg.attribute_effect, replicates=cfg.replicates,
                         master_seed=cfg.seed)
            for n in Ns for p in cfg.scenarios]
    rep = concordance_study(scen, alpha_level=cfg.alpha_level, quad_order=cfg.quad_order,
                            workers=cfg.workers)
    rep.write_csv(out / "concordance.csv")
    rep.write_json(out / "concordance.json")
    lines = ["Concordance between inferred and true orderings", ""]
    lines.append(f"{'scenario':<12} {'N':>4} {'reps':>5} " + " ".join(f"{m:>12}" for m in rep.model_names))
    total_fail = total = 0
    for s in rep.scenarios:
        lines.append(f"{s.pattern:<12} {s.N:>4} {s.replicates:>5} "
                     + " ".join(f"{r * 100:>11.1f}%" if np.isfinite(r) else f"{'NA':>12}"
                                for r in s.rates()))
        total_fail += sum(s.failures)
        total += s.replicates * len(rep.model_names)
    lines.append("")
    lines.append(f"failed fits: {total_fail} of {total}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if total and total_fail / total > cfg.max_failure_rate:
        print(f"error: {total_fail} of {total} fits failed", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------- design


def cmd_design(cfg: DesignConfig) -> int:
    out = Path(cfg.out)
    if cfg.b is not None or cfg.r is not None:
        if cfg.b is None or cfg.r is None:
            raise ConfigError("give both b and r, or neither")
        params = validate_bibd(cfg.t, cfg.b, cfg.h, cfg.r, cfg.allow_complete)
    else:
        params = None
    out.mkdir(parents=True, exist_ok=True)
    if cfg.h == cfg.t:
        raise DataError("complete blocks need no design search (h = t)")
    base = generate_bibd(cfg.t, cfg.h, 1, cfg.budget)
    reps = 1
    if params is not None:
        if params.b % base.params.b:
            raise DataError(f"constructed a design with b={base.params.b}, which does not "
                            f"divide the requested b={params.b}")
        reps = params.b // base.params.b
    layout = generate_bibd(cfg.t, cfg.h, reps, cfg.budget) if reps > 1 else base
    schedule = None
    if cfg.panellists is not None:
        schedule = assign_panellists(layout, cfg.panellists, cfg.seed)
        write_schedule_csv(schedule, out / "layout.csv")
    else:
        with (out / "layout.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["block", "position", "treatment"])
            for k, blk in enumerate(layout.blocks, start=1):
                for pos, trt in enumerate(blk, start=1):
                    w.writerow([k, pos, trt])
    write_layout_json(layout, schedule, out / "layout.json")
    p = layout.params
    lines = [f"Balanced incomplete block design: t={p.t}, b={p.b}, h={p.h}, r={p.r}, lambda={p.lam}"]
    if schedule is not None:
        lines.append(f"{len(schedule)} panellists, each served one block in randomised order "
                     f"(seed {cfg.seed})")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------- explore


def cmd_explore(cfg: ExploreConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_data(cfg.data)
    tests = {a: chisq_association(contingency_table(ds, a)).to_json() for a in ds.attributes}
    _dump(_clean({"association": tests}), out / "tests.json")
    res = mca_coordinates(ds, cfg.n_axes)
    write_coords_csv(res, out / "coords.csv")
    lines = ["Exploratory analysis", "",
             "Formulation x response association per attribute (chi-square)"]
    for a, r in tests.items():
        lines.append(f"  {a}: X2 = {r['statistic']:.4g}, df = {r['df']}, p {_pp(r['p_value'])}")
    lines.append("")
    lines.append("Multiple correspondence analysis (indicator matrix)")
    lines.append(f"  total inertia {res.total_inertia:.4f}; axis shares "
                 + ", ".join(f"{s:.3f}" for s in res.inertia_share))
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------- report


def cmd_report(cfg: ReportConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        doc = json.loads(Path(cfg.fit).read_text(encoding="utf-8"))
        fit = FittedModel.from_json(doc)
    except FileNotFoundError:
        raise DataError(f"no such fit file: {cfg.fit}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"unreadable fit file: {exc}") from None
    tab = prediction_table(fit, cfg.averaging, cfg.threshold, cfg.quad_order)
    tab.write_csv(out / "predictions.csv")
    ranking = rank_scores(tab.formulations, tab.attribute_mean)
    lines = [f"Acceptance P(Y >= {cfg.threshold}) ({cfg.averaging}-averaged), attribute mean"]
    lines += [f"  {r.rank:2d}. {r.formulation}: {r.score:.3f}" + (" (tie)" if r.tied else "")
              for r in ranking]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "design": cmd_design,
            "explore": cmd_explore, "report": cmd_report}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sensilogit", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.command, args.config, args.seed, args.out)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            code = COMMANDS[args.command](cfg)
        _metadata(Path(cfg.out), args.command, cfg, started)
        return code
    except SensilogitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
