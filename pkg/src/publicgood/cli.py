"""Command line entry point: ``publicgood {run,oracle,compare} SCENARIO``.

Scenario files are JSON::

    {
      "L": 2.0,
      "stepsize": {"r": 1.0},
      "agents": [
        {"alpha": 1.0, "w": 2.0,
         "utility": {"kind": "log-log", "a": 1.0, "b": 1.0, "c": 3.0}}
      ],
      "mu0": [],
      "run": {"max_iters": 100000, "window": 500, "eps_feasible": 0.01,
              "eps_stall": 1e-6, "lambda_cap_Lambda": 10.0}
    }

``mu0`` and ``run`` are optional.  Exit status: 0 when the run met its
residual test or stalled, 2 when it hit the iteration cap with residuals
still open, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import oracle, sim
from .model import (AgentSpec, Scenario, StepsizeSchedule, UtilitySpec, ValidatedScenario,
                    ValidationError, validate_scenario)

TOP_KEYS = {"L", "stepsize", "agents", "mu0", "run"}
AGENT_KEYS = {"alpha", "w", "utility"}
UTILITY_KEYS = {"log-log": {"kind", "a", "b", "c"}, "quad-log": {"kind", "a", "b", "c", "p"}}
RUN_KEYS = {"max_iters", "window", "eps_feasible", "eps_stall", "lambda_cap_Lambda"}


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    max_iters: int = 100_000
    window: int = 500
    eps_feasible: Optional[float] = None
    eps_stall: float = 1e-6
    lambda_cap_Lambda: Optional[float] = None


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    mu0: Optional[tuple[float, ...]] = None
    run: RunConfig = field(default_factory=RunConfig)

    def validated(self) -> ValidatedScenario:
        return validate_scenario(self.scenario)


def _number(v: Any, key: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{key}: expected a finite number, got {v!r}")
    return float(v)


def _object(v: Any, key: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(v, dict):
        raise ParseError(f"{key}: expected an object")
    unknown = sorted(set(v) - allowed)
    if unknown:
        raise ParseError(f"{key}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(required - set(v))
    if missing:
        raise ParseError(f"{key}: missing key(s) {', '.join(missing)}")
    return v


def _utility(v: Any, key: str) -> UtilitySpec:
    if not isinstance(v, dict) or "kind" not in v:
        raise ParseError(f"{key}: expected an object with a 'kind'")
    kind = v["kind"]
    if kind not in UTILITY_KEYS:
        raise ParseError(f"{key}.kind: unknown utility kind {kind!r}")
    keys = UTILITY_KEYS[kind]
    _object(v, key, keys, keys)
    num = {k: _number(v[k], f"{key}.{k}") for k in keys - {"kind"}}
    if kind == "log-log":
        return UtilitySpec.log_log(num["a"], num["b"], num["c"])
    return UtilitySpec.quad_log(num["a"], num["p"], num["b"], num["c"])


def _run_config(v: Any) -> RunConfig:
    _object(v, "run", RUN_KEYS, set())
    kw: dict[str, Any] = {}
    for k in ("max_iters", "window"):
        if k in v:
            n = v[k]
            if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                raise ParseError(f"run.{k}: expected a positive integer, got {n!r}")
            kw[k] = n
    for k in ("eps_feasible", "eps_stall", "lambda_cap_Lambda"):
        if k in v:
            kw[k] = _number(v[k], f"run.{k}")
    return RunConfig(**kw)


def parse_scenario_file(text: str) -> ScenarioFile:
    """Parse and validate a scenario document.

    Raises :class:`ParseError` for malformed input and forwards
    :class:`~publicgood.model.ValidationError` when the scenario breaks a
    modelling assumption.
    """
    try:
        doc = json.loads(text, parse_constant=lambda c: _number(float(c), c))
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _object(doc, "<document>", TOP_KEYS, {"L", "stepsize", "agents"})
    L = _number(doc["L"], "L")
    step = _object(doc["stepsize"], "stepsize", {"r"}, {"r"})
    r = _number(step["r"], "stepsize.r")
    if not isinstance(doc["agents"], list):
        raise ParseError("agents: expected an array")
    agents = []
    for n, a in enumerate(doc["agents"]):
        key = f"agents[{n}]"
        _object(a, key, AGENT_KEYS, AGENT_KEYS)
        agents.append(AgentSpec(_number(a["alpha"], f"{key}.alpha"),
                                _number(a["w"], f"{key}.w"),
                                _utility(a["utility"], f"{key}.utility")))
    mu0 = None
    if "mu0" in doc:
        if not isinstance(doc["mu0"], list):
            raise ParseError("mu0: expected an array")
        mu0 = tuple(_number(x, f"mu0[{n}]") for n, x in enumerate(doc["mu0"]))
    run = _run_config(doc["run"]) if "run" in doc else RunConfig()
    sf = ScenarioFile(Scenario(tuple(agents), L, StepsizeSchedule(r)), mu0, run)
    sf.validated()
    m = len(agents)
    if mu0 is not None and len(mu0) != m * (m - 1) // 2:
        raise ParseError(f"mu0: expected {m * (m - 1) // 2} entries, got {len(mu0)}")
    return sf


def _utility_doc(u: UtilitySpec) -> dict:
    if u.kind == "external":
        raise ValueError("external utilities cannot be written to a scenario file")
    d = {"kind": u.kind, "a": u.a, "b": u.b, "c": u.c}
    if u.kind == "quad-log":
        d["p"] = u.p
    return d


def serialize_scenario(sf: ScenarioFile) -> str:
    s = sf.scenario
    doc: dict[str, Any] = {
        "L": s.L,
        "stepsize": {"r": s.stepsize.r},
        "agents": [{"alpha": a.alpha, "w": a.w, "utility": _utility_doc(a.utility)}
                   for a in s.agents],
    }
    if sf.mu0 is not None:
        doc["mu0"] = list(sf.mu0)
    run = {k: v for k, v in vars(sf.run).items() if v is not None}
    doc["run"] = run
    return json.dumps(doc, indent=2) + "\n"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def result_doc(res: sim.RunResult) -> dict:
    return {
        "x_star": res.x_star,
        "x_agents": _jsonable(res.x_agents),
        "t_star": _jsonable(res.t_star),
        "lambda_star": _jsonable(res.lambda_star),
        "mu_star": _jsonable(res.mu_star),
        "g_min": res.g_min,
        "k_min": res.k_min,
        "iterations": res.iterations,
        "termination": res.reason,
    }


def _load(path: str) -> ScenarioFile:
    return parse_scenario_file(Path(path).read_text())


def _load_mu0(path: Optional[str]) -> Optional[tuple[float, ...]]:
    if path is None:
        return None
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a JSON array")
    return tuple(_number(x, f"mu0[{n}]") for n, x in enumerate(data))


def _execute(args) -> tuple[ScenarioFile, ValidatedScenario, sim.RunResult, sim.Trace,
                             sim.TerminationCriteria, tuple]:
    sf = _load(args.scenario)
    if args.max_iters is not None:
        sf = replace(sf, run=replace(sf.run, max_iters=args.max_iters))
    mu0 = _load_mu0(args.seed_mu0) or sf.mu0
    vs = sf.validated()
    eps = sf.run.eps_feasible
    term = sim.TerminationCriteria.for_scenario(
        vs.L, eps_feasible=eps, eps_coherence=eps,
        eps_stall=sf.run.eps_stall, window=sf.run.window)
    res, trace = sim.run(vs, sf.run.max_iters, term=term, mu0=mu0)
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    return sf, vs, res, trace, term, mu0


def _status(res: sim.RunResult, term: sim.TerminationCriteria) -> int:
    if res.reason in ("residuals-met", "stalled"):
        return 0
    met = res.payability_gap <= term.eps_feasible and res.coherence_gap <= term.eps_coherence
    return 0 if met else 2


def _emit(doc: dict, path: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _run_doc(res: sim.RunResult) -> dict:
    return {
        "result": result_doc(res),
        "charges": _jsonable(res.charges.gamma),
        "residuals": {
            "payability_gap": res.payability_gap,
            "coherence_gap": res.coherence_gap,
            "financing_residual": res.financing_residual,
            "budget_balance": res.charges.total,
        },
    }


def cmd_run(args) -> int:
    _, _, res, _, term, _ = _execute(args)
    _emit(_run_doc(res), args.report)
    return _status(res, term)


def cmd_oracle(args) -> int:
    vs = _load(args.scenario).validated()
    o = oracle.centralized_solve(vs)
    _emit({"x_opt": o.x_opt, "t_opt": _jsonable(o.t_opt), "value": o.value,
           "inner_multiplier": o.inner_multiplier}, None)
    return 0


def cmd_compare(args) -> int:
    sf, vs, res, trace, term, mu0 = _execute(args)
    o = oracle.centralized_solve(vs)
    cfg = sim.gap_config(vs, sf.run.lambda_cap_Lambda, res.iterations, mu0)
    diag = sim.diagnostics(trace, o, cfg, vs.stepsize, res)
    doc = _run_doc(res)
    doc["oracle"] = {"x_opt": o.x_opt, "t_opt": _jsonable(o.t_opt), "value": o.value}
    doc["diagnostics"] = diag.summary()
    doc["diagnostics"]["Lambda"] = cfg.Lambda
    _emit(doc, args.report)
    return _status(res, term)


class _Parser(argparse.ArgumentParser):
    # usage errors share the generic failure status; 2 means "hit the cap"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="publicgood",
                description="Decentralized public-good price adjustment.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("run", cmd_run, "run the message exchange"),
                            ("compare", cmd_compare, "run, solve centrally and diagnose")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario")
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--trace", help="write the per-iteration CSV here")
        sp.add_argument("--report", help="write the JSON report here (default: stdout)")
        sp.add_argument("--seed-mu0", help="JSON array with the starting mu")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("oracle", help="solve the welfare problem centrally")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_iters", None) is not None and args.max_iters < 1:
        print("error: --max-iters must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (OSError, ParseError, ValidationError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
