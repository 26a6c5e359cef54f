"""Command-line front end.

    lemonsignal analyze CANON --objective volume --alpha const:1
    lemonsignal oracle configs/two-type.yaml --oracle-only
    lemonsignal export-lp CANON --lp-n 50

Instances are built-in names (see ``lemonsignal.instances.BUILTIN``) or
YAML files.  Every run writes ``report.json`` into the output directory,
including failed runs.  Exit codes: 0 success, 1 bad configuration,
2 model assumptions violated, 3 certificate violation, 4 oracle
disagreement.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from . import signals as sg
from .instances import BIASED_SIGNAL, BUILTIN, TWO_TYPE_COSTS, TWO_TYPE_MASSES, TWO_TYPE_TYPES, UNBIASED_MEANS, UNBIASED_SIGNAL
from .matching import EscapeError, MatchingCurve, solve_g1, solve_g2
from .model import DiscreteMarket, MarketInstance, Posterior, ScalarFn, ValidationError, check_assumptions, equilibrium_price
from .oracle import build_lp, compare, export_lp, nam_swap_check, solve_lp
from . import verification as vf

OUT_ENV = "LEMONSIGNAL_OUT"
DEFAULT_OUT = "lemonsignal-out"

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_CERTIFICATE, EXIT_ORACLE = 0, 1, 2, 3, 4

STAGES = {
    "analyze": ("construct", "verify", "certify"),
    "build-signal": ("construct",),
    "verify": ("construct", "verify"),
    "certify": ("construct", "verify", "certify"),
    "oracle": ("construct", "oracle"),
    "export-lp": ("export",),
}


class ConfigError(ValueError):
    pass


class AssumptionFailure(RuntimeError):
    pass


class OracleDisagreement(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    instance: str
    objective: str = "volume"
    alpha: str = "const:1"
    beta: Optional[float] = None
    n: int = 2000
    lp_n: int = 100
    delta: float = 1e-3
    out: str = DEFAULT_OUT
    oracle_only: bool = False
    with_oracle: bool = False

    def validate(self):
        if self.command not in STAGES:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.objective not in ("volume", "price-surplus"):
            raise ConfigError(f"objective: expected volume or price-surplus, got {self.objective!r}")
        if self.objective == "price-surplus":
            if self.beta is None:
                raise ConfigError("beta: required for the price-surplus objective")
            if not 0.0 <= self.beta <= 1.0:
                raise ConfigError(f"beta: must lie in [0, 1], got {self.beta}")
        if not 10 <= self.n <= 5000:
            raise ConfigError(f"n: must lie in [10, 5000], got {self.n}")
        if not 2 <= self.lp_n <= 500:
            raise ConfigError(f"lp-n: must lie in [2, 500], got {self.lp_n}")
        if not 0 < self.delta < 0.1:
            raise ConfigError(f"delta: must lie in (0, 0.1), got {self.delta}")
        if self.instance not in BUILTIN and not os.path.exists(self.instance):
            raise ConfigError(f"instance: no built-in named {self.instance!r} and no such file")

    def stages(self):
        if self.oracle_only:
            return ("oracle",)
        st = STAGES[self.command]
        if self.with_oracle and "oracle" not in st:
            st = st + ("oracle",)
        return st


# ---------------------------------------------------------------------------
# config parsing


def _frac(v, key):
    try:
        return Fraction(str(v).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key}: cannot read {v!r} as a number") from exc


def _scalar_fn(raw, kind, key, **kw) -> ScalarFn:
    try:
        if isinstance(raw, (int, float)):
            return ScalarFn.constant(float(raw), kind=kind, name=key, **kw)
        if isinstance(raw, list):
            return ScalarFn.polynomial([float(_frac(v, key)) for v in raw], kind=kind, name=key, **kw)
        if isinstance(raw, dict) and {"breakpoints", "coefficients"} <= set(raw):
            coeffs = [[float(_frac(v, key)) for v in row] for row in raw["coefficients"]]
            return ScalarFn(np.array(raw["breakpoints"], dtype=float), coeffs, kind=kind, name=key, **kw)
    except ValidationError as exc:
        raise ConfigError(f"{exc.key or key}: {exc}") from exc
    raise ConfigError(f"{key}: expected a number, a coefficient list or {{breakpoints, coefficients}}")


def load_yaml(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


@dataclass
class LoadedInstance:
    name: str
    continuum: Optional[MarketInstance] = None
    discrete: Optional[DiscreteMarket] = None
    exact: Optional[tuple] = None  # (types, masses, costs) as Fractions
    signals: Dict[str, dict] = field(default_factory=dict)


def _builtin_signals() -> Dict[str, dict]:
    return {
        "sigma": {"conditional": BIASED_SIGNAL},
        "sigma_prime": {"conditional": UNBIASED_SIGNAL, "means": UNBIASED_MEANS},
    }


def load_instance(ref: str) -> LoadedInstance:
    if ref in BUILTIN:
        obj = BUILTIN[ref]()
        if isinstance(obj, DiscreteMarket):
            return LoadedInstance(ref, discrete=obj, exact=(TWO_TYPE_TYPES, TWO_TYPE_MASSES, TWO_TYPE_COSTS),
                                  signals=_builtin_signals())
        return LoadedInstance(ref, continuum=obj)
    data = load_yaml(ref)
    name = str(data.get("name", os.path.splitext(os.path.basename(ref))[0]))
    if "types" in data:
        for key in ("masses", "costs"):
            if key not in data:
                raise ConfigError(f"{ref}: {key}: required for a discrete instance")
        exact = tuple([_frac(v, f"{ref}: {key}[{k}]") for k, v in enumerate(data[key])] for key in ("types", "masses", "costs"))
        try:
            mk = DiscreteMarket(*(np.array([float(v) for v in col]) for col in exact), name=name)
        except ValidationError as exc:
            raise ConfigError(f"{ref}: {exc.key}: {exc}") from exc
        sigs = {}
        for sname, sdef in (data.get("signals") or {}).items():
            key = f"{ref}: signals.{sname}"
            if not isinstance(sdef, dict) or "conditional" not in sdef:
                raise ConfigError(f"{key}: needs a 'conditional' table")
            cond = [[_frac(v, key) for v in row] for row in sdef["conditional"]]
            if len(cond) != len(exact[0]):
                raise ConfigError(f"{key}.conditional: one row per type expected")
            entry = {"conditional": cond}
            if "means" in sdef:
                entry["means"] = [_frac(v, key) for v in sdef["means"]]
            sigs[sname] = entry
        return LoadedInstance(name, discrete=mk, exact=exact, signals=sigs)
    for key in ("density", "cost"):
        if key not in data:
            raise ConfigError(f"{ref}: {key}: required")
    regime = data.get("regime")
    zero_ok = regime == "gains-at-bottom"
    f = _scalar_fn(data["density"], "density", f"{ref}: density")
    c = _scalar_fn(data["cost"], "cost", f"{ref}: cost", origin_zero_ok=zero_ok)
    try:
        inst = MarketInstance(f, c, declared_regime=regime, name=name)
    except ValidationError as exc:
        raise ConfigError(f"{ref}: {exc.key}: {exc}") from exc
    return LoadedInstance(name, continuum=inst)


def parse_alpha(text: str) -> ScalarFn:
    kind, _, body = text.partition(":")
    if kind == "const":
        return _scalar_fn(float(_frac(body, "alpha")), "weight", "alpha")
    if kind == "poly":
        return _scalar_fn([v for v in body.split(",") if v.strip()], "weight", "alpha")
    if kind == "piecewise":
        if not os.path.exists(body):
            raise ConfigError(f"alpha: piecewise file {body!r} not found")
        return _scalar_fn(load_yaml(body), "weight", f"alpha ({body})")
    raise ConfigError(f"alpha: expected const:<v>, poly:<c0,c1,...> or piecewise:<file>, got {text!r}")


def make_objective(cfg: RunConfig) -> vf.Objective:
    if cfg.objective == "volume":
        return vf.Objective.volume(parse_alpha(cfg.alpha))
    return vf.Objective.price_surplus(cfg.beta)


# ---------------------------------------------------------------------------
# pipeline


def _num(v):
    if isinstance(v, Fraction):
        return {"exact": str(v), "value": float(v)}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, MatchingCurve):
        return obj.label
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return _num(obj)


def construct(inst: MarketInstance, objective: vf.Objective, report: dict) -> sg.SignalPlan:
    prof = inst.crossings
    report["regime"] = prof.regime
    report["crossings"] = list(prof.crossings)
    notes = report.setdefault("notes", [])
    if prof.regime in ("gains-at-bottom", "all-inefficient", "all-efficient"):
        plan = sg.build_full_reveal(inst)
        if prof.regime == "gains-at-bottom":
            notes.append("gains at the bottom: full revelation is optimal")
        else:
            notes.append(f"{prof.regime}: no pooling can add trade, full revelation returned")
        return plan
    if prof.regime == "multi-crossing":
        if objective.kind != "volume":
            raise AssumptionFailure("price/surplus objective needs a single crossing with gains at the top")
        try:
            plan = sg.greedy_multicross(inst, objective.alpha)
        except sg.UnclassifiedRatioError as exc:
            raise AssumptionFailure(str(exc)) from exc
        notes.append("several crossings: greedy block pairing")
        return plan
    try:
        g2 = solve_g2(inst)
    except EscapeError as exc:
        raise AssumptionFailure(f"full trade is feasible: {exc}") from exc
    assume = check_assumptions(inst, g2.theta_lo)
    report["assumptions"] = {"gains_at_top": assume.gains_at_top, "full_trade_infeasible": assume.full_trade_infeasible,
                             "threshold_property": assume.threshold_property, "notes": list(assume.notes)}
    report["theta_star"] = prof.theta_star
    if not assume.full_trade_infeasible:
        raise AssumptionFailure("full trade is feasible")
    try:
        if objective.kind == "volume":
            plan = sg.build_volume_plan(inst, objective.alpha)
        else:
            if not assume.threshold_property:
                raise AssumptionFailure("price/surplus threshold property fails")
            plan = sg.build_price_surplus_plan(inst, objective.beta)
    except sg.UnclassifiedRatioError as exc:
        raise AssumptionFailure(str(exc)) from exc
    except sg.NoBracketError as exc:
        raise AssumptionFailure(str(exc)) from exc
    return plan


def _write_curves(plan: sg.SignalPlan, path: str) -> bool:
    pools = [s for s in plan.segments if s.kind == "pool"]
    if not pools:
        return False
    with open(path, "w", newline="") as fh:
        fh.write("# schema=1\n")
        w = csv.writer(fh)
        w.writerow(["curve", "x", "a", "G", "residual"])
        for k, seg in enumerate(pools):
            for row in seg.curve.to_rows():
                w.writerow([k] + [f"{v:.15g}" for v in row])
    return True


def _oracle_discrete(loaded: LoadedInstance, objective: vf.Objective, out: str, report: dict):
    mk = loaded.discrete
    lp = build_lp(mk, objective)
    sol = solve_lp(lp, exact_market=loaded.exact)
    sol.to_csv(os.path.join(out, "lp_solution.csv"))
    rep = {"n_types": int(mk.types.size), "n_vars": int(lp.n_vars), "value": _num(sol.value),
           "method": sol.method, "iterations": sol.iterations, "signals": {}}
    if loaded.exact is not None:
        rep["signals"] = {k: evaluate_finite_signal(loaded, v, objective) for k, v in loaded.signals.items()}
    report["oracle"] = rep
    report["artifacts"].append("lp_solution.csv")


def evaluate_finite_signal(loaded: LoadedInstance, sig: dict, objective: vf.Objective) -> dict:
    """Exact posterior means, prices and (for unbiased signals) residuals and value."""
    types, masses, costs = loaded.exact
    cond = sig["conditional"]
    joint = [[m * p for p in row] for m, row in zip(masses, cond)]
    ncol = len(joint[0])
    out = {"realizations": []}
    mk = loaded.discrete
    for j in range(ncol):
        tot = sum(row[j] for row in joint)
        if tot == 0:
            continue
        mean = sum(t * row[j] for t, row in zip(types, joint)) / tot
        sup = [i for i in range(len(types)) if joint[i][j] > 0]
        post = Posterior(np.array([float(types[i]) for i in sup]), np.array([float(joint[i][j] / tot) for i in sup]))
        price = equilibrium_price(mk, post)
        out["realizations"].append({"probability": _num(tot), "mean": _num(mean), "price": price.price,
                                    "trade": price.trade})
    bp = max(abs(sum(row) - 1) for row in cond)
    out["bp_residual"] = _num(bp)
    means = sig.get("means")
    if means is not None:
        m_res = max(abs(sum((means[j] - t) * row[j] for t, row in zip(types, joint))) for j in range(ncol))
        pm = [joint[i][j] for i in range(len(types)) for j in range(ncol)
              if joint[i][j] > 0 and min(types[i], costs[i]) > means[j]]
        val = Fraction(0)
        for i in range(len(types)):
            for j in range(ncol):
                if joint[i][j] > 0 and costs[i] <= means[j]:
                    if objective.kind == "volume":
                        val += Fraction(float(objective.alpha(float(types[i])))) * joint[i][j]
                    else:
                        val += (means[j] - (1 - Fraction(objective.beta)) * costs[i]) * joint[i][j]
        out.update({"m_residual": _num(m_res), "pm_residual": _num(max(pm) if pm else Fraction(0)), "value": _num(val)})
    return out


def run(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    # the output path is left out so reruns elsewhere give identical reports
    conf = {k: v for k, v in asdict(cfg).items() if k != "out"}
    report = {"version": __version__, "command": cfg.command, "config": conf, "status": "ok",
              "artifacts": ["report.json"], "notes": []}
    code = EXIT_OK
    try:
        cfg.validate()
        objective = make_objective(cfg)
        loaded = load_instance(cfg.instance)
        report["instance"] = loaded.name
        code = _pipeline(cfg, objective, loaded, report)
    except ConfigError as exc:
        code = _fail(report, EXIT_CONFIG, "config", exc)
    except AssumptionFailure as exc:
        code = _fail(report, EXIT_ASSUMPTION, "assumption", exc)
    except (vf.CertificateViolation, vf.NegativeGapError) as exc:
        code = _fail(report, EXIT_CERTIFICATE, "certificate", exc)
    except OracleDisagreement as exc:
        code = _fail(report, EXIT_ORACLE, "oracle", exc)
    report["exit_code"] = code
    with open(os.path.join(cfg.out, "report.json"), "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def _fail(report, code, reason, exc) -> int:
    report["status"] = "failed"
    report["failure"] = {"reason": reason, "detail": str(exc)}
    return code


def _pipeline(cfg: RunConfig, objective: vf.Objective, loaded: LoadedInstance, report: dict) -> int:
    stages = cfg.stages()
    out = cfg.out
    if "export" in stages:
        lp = build_lp(loaded.discrete if loaded.continuum is None else loaded.continuum, objective,
                      None if loaded.continuum is None else cfg.lp_n)
        export_lp(lp, os.path.join(out, "problem.lp"))
        report["artifacts"].append("problem.lp")
        report["lp"] = {"n_vars": int(lp.n_vars), "n_rows": int(lp.A.shape[0])}
        return EXIT_OK
    if loaded.continuum is None:
        report["notes"].append("finite market: continuum construction does not apply, LP oracle only")
        _oracle_discrete(loaded, objective, out, report)
        return EXIT_OK
    inst = loaded.continuum
    plan = None
    if "construct" in stages:
        plan = construct(inst, objective, report)
        report["plan"] = plan.summary()
        plan.to_csv(os.path.join(out, "plan.csv"))
        report["artifacts"].append("plan.csv")
        if _write_curves(plan, os.path.join(out, "curves.csv")):
            report["artifacts"].append("curves.csv")
        report["value"] = vf.plan_value(plan, inst, objective)
        for key in ("theta_star", "theta_lower", "x_star", "theta1", "theta2", "theta_beta"):
            if key in plan.meta:
                report[key] = plan.meta[key]
        if "theta_lower" in report and inst.crossings.regime == "gains-at-top":
            try:
                report["theta_upper"] = solve_g1(inst).theta_hi
            except EscapeError:
                pass
    ds = None
    if "verify" in stages:
        ds = vf.discretize(plan, inst, cfg.n)
        feas = vf.check_feasibility(ds, inst)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            ov = vf.evaluate_objective(ds, inst, objective)
        report["verification"] = {"n": cfg.n, "bp": feas.bp_residual, "m": feas.m_residual, "pm": feas.pm_residual,
                                  "feasible": feas.ok(), "value": ov.value, "theta_form": ov.theta_form,
                                  "warnings": [str(w.message) for w in caught]}
        if not feas.ok():
            raise vf.CertificateViolation(f"discretized plan is infeasible: {feas}")
    if "certify" in stages:
        _certify(cfg, inst, objective, plan, ds, report)
    if "oracle" in stages:
        return _oracle_continuum(cfg, inst, objective, report)
    return EXIT_OK


def _certify(cfg, inst, objective, plan, ds, report):
    if objective.kind != "volume" or inst.crossings.regime != "gains-at-top" or not any(
            s.kind == "pool" for s in plan.segments):
        report["certificate"] = {"built": False, "reason": "dual certificate covers the volume objective on reveal-pool and pool-reveal-pool plans"}
        return
    cert = vf.build_dual_volume(inst, objective.alpha, plan)
    zp = vf.verify_zp(cert, inst, delta=cfg.delta, strict=False)
    primal = report["value"]
    dual = vf.dual_value(cert, inst)
    gap = dual - primal
    support = vf.check_support_optimality(ds, cert, inst) if ds is not None else None
    cert.to_csv(os.path.join(cfg.out, "dual.csv"))
    report["artifacts"].append("dual.csv")
    report["certificate"] = {"built": True, "kind": cert.kind, "C": cert.C, "zp_min_slack": zp.min_slack,
                             "zp_argmin": list(zp.argmin), "strip_ok": zp.strip_ok, "delta": zp.delta,
                             "dual_value": dual, "gap": gap, "support_slack": support,
                             "ode_residual": cert.ode_residual(delta=cfg.delta),
                             "blow_up": cert.meta.get("blow_up")}
    if not zp.passed:
        raise vf.CertificateViolation(f"(ZP) slack {zp.min_slack:.3e} at {zp.argmin}")
    if gap < -vf.GAP_TOL:
        raise vf.NegativeGapError(f"dual value below primal by {-gap:.3e}")
    if gap > vf.GAP_TOL:
        raise vf.CertificateViolation(f"duality gap {gap:.3e} exceeds {vf.GAP_TOL}")
    if support is not None and support > vf.GAP_TOL:
        raise vf.CertificateViolation(f"support slack {support:.3e} exceeds {vf.GAP_TOL}")


def _oracle_continuum(cfg, inst, objective, report) -> int:
    lp = build_lp(inst, objective, cfg.lp_n)
    sol = solve_lp(lp, exact=False)
    sol.to_csv(os.path.join(cfg.out, "lp_solution.csv"))
    report["artifacts"].append("lp_solution.csv")
    rep = {"n": cfg.lp_n, "value": float(sol.value), "iterations": sol.iterations, "n_vars": int(lp.n_vars)}
    if objective.kind == "volume" and inst.crossings.regime == "gains-at-top":
        sw = nam_swap_check(sol)
        rep["swap_patterns"] = sw.patterns
        rep["improving_swaps"] = len(sw.improving)
    report["oracle"] = rep
    if "value" in report:
        row = compare(report["value"], {cfg.lp_n: float(sol.value)})[0]
        rep.update({"gap": row.gap, "tolerance": 5.0 / cfg.lp_n, "flagged": row.flagged})
        if row.flagged:
            raise OracleDisagreement(f"LP beats the plan by {row.gap:.3e} > 5/n at n={cfg.lp_n}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lemonsignal", description="Optimal disclosure in lemons markets.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in STAGES:
        s = sub.add_parser(name)
        s.add_argument("instance", help="built-in name or YAML file")
        s.add_argument("--objective", default="volume", choices=("volume", "price-surplus"))
        s.add_argument("--alpha", default="const:1", help="const:<v> | poly:<c0,c1,...> | piecewise:<file>")
        s.add_argument("--beta", type=float, default=None)
        s.add_argument("--n", type=int, default=2000, help="cells for plan verification")
        s.add_argument("--lp-n", type=int, default=100, help="cells for the LP oracle")
        s.add_argument("--delta", type=float, default=1e-3, help="half-width of the excluded strip at the crossing")
        s.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        s.add_argument("--oracle-only", action="store_true")
        s.add_argument("--oracle", dest="with_oracle", action="store_true", help="also run the LP oracle")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    cfg = RunConfig(args.command, args.instance, args.objective, args.alpha, args.beta, args.n, args.lp_n,
                    args.delta, out, args.oracle_only, args.with_oracle)
    code = run(cfg)
    with open(os.path.join(out, "report.json")) as fh:
        rep = json.load(fh)
    _print_summary(rep)
    return code


def _print_summary(rep: dict):
    lines = [f"instance: {rep.get('instance', '?')}  status: {rep['status']}  exit: {rep['exit_code']}"]
    for key in ("regime", "theta_star", "theta_lower", "theta_upper", "x_star", "theta_beta", "value"):
        if key in rep:
            lines.append(f"  {key}: {rep[key]}")
    if "plan" in rep:
        lines.append("  plan: " + " | ".join(f"{s['kind']}[{s['lo']:.6g}, {s['hi']:.6g}]" for s in rep["plan"]["segments"]))
    cert = rep.get("certificate")
    if cert and cert.get("built"):
        lines.append(f"  certificate: gap {cert['gap']:.3e}, (ZP) min slack {cert['zp_min_slack']:.3e}, support slack {cert['support_slack']:.3e}")
    orc = rep.get("oracle")
    if orc:
        val = orc["value"]["exact"] if isinstance(orc["value"], dict) else orc["value"]
        lines.append(f"  LP value: {val}")
        for name, s in orc.get("signals", {}).items():
            if "value" in s:
                lines.append(f"  signal {name}: value {s['value']['exact']}")
    for note in rep.get("notes", []):
        lines.append(f"  note: {note}")
    if rep["status"] != "ok":
        lines.append(f"  failure ({rep['failure']['reason']}): {rep['failure']['detail']}")
    print("\n".join(lines))


if __name__ == "__main__":
    sys.exit(main())
