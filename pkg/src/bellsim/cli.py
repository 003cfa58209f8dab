"""Command-line front end.

Angles on the command line and in output are degrees. Exit codes: 0 success,
2 usage or validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import __version__
from .chsh import (
    chsh_for_model,
    counterfactual_chsh,
    counterfactual_terms,
    scan_settings,
    sequential_terms,
)
from .core import (
    BELL_BOUND,
    DISCONTINUOUS_TOL,
    TSIRELSON,
    ChshResult,
    DomainError,
    ModelKind,
    SettingsQuad,
)
from .eventstream import (
    DEFAULT_DT_NS,
    CoincidenceConfig,
    EventFormatError,
    events_from_samples,
    load_settings,
    match_coincidences,
    merge_columns,
    read_event_columns,
    tally_matches,
    write_events,
    write_settings,
)
from .models import MODELS, correlation_from_joint, default_rule_for, get_model, joint_for_model
from .montecarlo import RunConfig, chsh_from_estimates, simulate_chsh, simulate_pairs
from .quadrature import QuadratureRule
from .report import OutputDocument

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

SEED_ENV = "BELLSIM_SEED"
DEFAULT_SEED = 0
DEFAULT_PAIRS = 100_000
TERM_LABELS = ("ab", "ab'", "a'b", "a'b'")
CHANNELS = ("++", "--", "+-", "-+")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _deg(rad: float) -> float:
    return math.degrees(rad)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from None


def _pick(args: argparse.Namespace, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _seed(args: argparse.Namespace, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _finite(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"{name} must be finite, got {value!r}")
    return v


def _quad(args: argparse.Namespace, cfg: dict) -> SettingsQuad | None:
    angles = _pick(args, cfg, "angles")
    if angles is None:
        return None
    if len(angles) != 4:
        raise UsageError(f"--angles needs four values, got {len(angles)}")
    return SettingsQuad.from_degrees(*(_finite("angle", a) for a in angles))


def _pair(args: argparse.Namespace, cfg: dict) -> tuple[float, float] | None:
    alpha = _pick(args, cfg, "alpha")
    beta = _pick(args, cfg, "beta")
    if alpha is None and beta is None:
        return None
    if alpha is None or beta is None:
        raise UsageError("--alpha and --beta must be given together")
    return math.radians(_finite("alpha", alpha)), math.radians(_finite("beta", beta))


def _model(args: argparse.Namespace, cfg: dict):
    name = _pick(args, cfg, "model")
    if name is None:
        raise UsageError("--model is required")
    nodes = _pick(args, cfg, "nodes")
    if nodes is not None and nodes < 4 and name == "amplitude":
        raise UsageError(f"--nodes must be >= 4 for the amplitude model, got {nodes}")
    return get_model(name, nodes)


def _rule(model, args: argparse.Namespace, cfg: dict) -> QuadratureRule:
    nodes = _pick(args, cfg, "nodes")
    if nodes is not None and model.kind.is_local:
        if nodes < 1:
            raise UsageError(f"--nodes must be positive, got {nodes}")
        return QuadratureRule(int(nodes))
    return default_rule_for(model)


def _base_meta(command: str, model, rule: QuadratureRule | None = None) -> dict:
    """Run metadata; ``nodes`` is recorded whenever quadrature shapes the result."""
    meta = {"tool": "bellsim", "version": __version__, "command": command, "model": model.name}
    if model.kind is ModelKind.PAPER_AMPLITUDE:
        meta["nodes"] = model.nodes
    elif rule is not None and model.kind.is_local:
        meta["nodes"] = rule.nodes
    return meta


def _chsh_tables(q: SettingsQuad, result: ChshResult, stderrs=None) -> dict:
    terms = []
    for i, ((a, b), e) in enumerate(zip(q.pairs(), result.terms)):
        row = {"term": TERM_LABELS[i], "alpha_deg": _deg(a), "beta_deg": _deg(b), "E": e}
        if stderrs is not None:
            row["stderr"] = stderrs[i]
        terms.append(row)
    summary = [
        {
            "S": result.s,
            "abs_S": abs(result.s),
            "stderr": result.stderr,
            "tolerance": result.tol,
            "classification": result.classification.value,
            "bell_bound": BELL_BOUND,
            "tsirelson_bound": TSIRELSON,
        }
    ]
    return {"terms": terms, "summary": summary}


def _tally_rows(items) -> list[dict]:
    rows = []
    for (s1, s2), t in items:
        rows.append(
            {
                "arm1_setting": s1,
                "arm2_setting": s2,
                "n_pp": t.n_pp,
                "n_mm": t.n_mm,
                "n_pm": t.n_pm,
                "n_mp": t.n_mp,
                "n_total": t.n_total,
            }
        )
    return rows


def _estimate_rows(items, cfg: CoincidenceConfig | None = None, angles=None) -> list[dict]:
    rows = []
    for i, ((s1, s2), t) in enumerate(items):
        e = t.estimate()
        row = {"arm1_setting": s1, "arm2_setting": s2}
        if angles is not None:
            a, b = angles[i]
        else:
            a, b = cfg.angle(1, s1), cfg.angle(2, s2)  # type: ignore[union-attr]
        row.update({"alpha_deg": _deg(a), "beta_deg": _deg(b), "E": e.value, "stderr": e.stderr})
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_analytic(args: argparse.Namespace, cfg: dict) -> OutputDocument:
    model = _model(args, cfg)
    pair = _pair(args, cfg)
    if pair is None:
        raise UsageError("analytic needs --alpha and --beta")
    alpha, beta = pair
    rule = _rule(model, args, cfg)
    joint = joint_for_model(model, alpha, beta, rule)
    normalized = joint.normalized()
    rows = [
        {"pair": ch, "raw": raw, "normalized": nrm}
        for ch, raw, nrm in zip(CHANNELS, joint.as_tuple(), normalized)
    ]
    summary = [
        {
            "alpha_deg": _deg(alpha),
            "beta_deg": _deg(beta),
            "E": correlation_from_joint(joint),
            "raw_total": joint.total,
        }
    ]
    meta = _base_meta("analytic", model, rule)
    meta["settings_deg"] = [_deg(alpha), _deg(beta)]
    return OutputDocument("correlation", {"joint": rows, "summary": summary}, meta)


def cmd_chsh(args: argparse.Namespace, cfg: dict) -> OutputDocument:
    model = _model(args, cfg)
    q = _quad(args, cfg)
    if q is None:
        raise UsageError("chsh needs --angles A B A' B'")
    mode = _pick(args, cfg, "mode", "analytic")
    if mode not in ("analytic", "counterfactual", "sequential", "mc"):
        raise UsageError(f"unknown mode {mode!r}")
    rule = _rule(model, args, cfg)
    meta = _base_meta("chsh", model, None if mode == "mc" else rule)
    meta["mode"] = mode
    meta["settings_deg"] = list(q.degrees())

    if mode == "analytic":
        return OutputDocument("chsh", _chsh_tables(q, chsh_for_model(model, q, rule)), meta)
    if mode == "counterfactual":
        if model.kind is not ModelKind.LOCAL_DETERMINISTIC:
            raise UsageError(
                f"counterfactual mode evaluates all four settings at one lambda and needs a "
                f"deterministic local model (e.g. 'sign'); {model.name!r} is {model.kind.value}"
            )
        terms = counterfactual_terms(model, q, rule)
        s = counterfactual_chsh(model, q, rule)
        result = ChshResult.from_terms(terms, tol=DISCONTINUOUS_TOL)
        tables = _chsh_tables(q, result)
        tables["summary"][0]["counterfactual_S"] = s
        return OutputDocument("chsh", tables, meta)
    if mode == "sequential":
        terms = sequential_terms(model, q, rule if model.kind.is_local else None)
        tol = DISCONTINUOUS_TOL if model.kind is ModelKind.LOCAL_DETERMINISTIC else None
        return OutputDocument("chsh", _chsh_tables(q, ChshResult.from_terms(terms, tol=tol)), meta)

    run = _run_config(model, args, cfg, meta)
    samples = simulate_chsh(run, q)
    estimates = [s.tally().estimate() for s in samples]
    result = chsh_from_estimates(estimates)
    tables = _chsh_tables(q, result, [e.stderr for e in estimates])
    tables["tallies"] = _tally_rows(zip(_QUAD_IDS, (s.tally() for s in samples)))
    return OutputDocument("chsh", tables, meta)


_QUAD_IDS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _run_config(model, args: argparse.Namespace, cfg: dict, meta: dict) -> RunConfig:
    n = int(_pick(args, cfg, "pairs", DEFAULT_PAIRS))
    shards = int(_pick(args, cfg, "shards", 1))
    seed = _seed(args, cfg)
    meta.update({"seed": seed, "n_pairs": n, "shards": shards})
    return RunConfig(model, n, seed, shards)


def cmd_scan(args: argparse.Namespace, cfg: dict) -> OutputDocument:
    model = _model(args, cfg)
    step_deg = _finite("step", _pick(args, cfg, "step", 2.5))
    if step_deg <= 0 or abs(90.0 / step_deg - round(90.0 / step_deg)) > 1e-9 * (90.0 / step_deg):
        raise UsageError(f"--step must divide 90 degrees evenly, got {step_deg}")
    rule = _rule(model, args, cfg)
    res = scan_settings(model, math.radians(step_deg), rule)
    b = res.best_settings
    best = [
        {
            "alpha_deg": _deg(b.alpha),
            "beta_deg": _deg(b.beta),
            "alpha_prime_deg": _deg(b.alpha_prime),
            "beta_prime_deg": _deg(b.beta_prime),
            "best_family_delta_deg": _deg(res.best_delta),
            "S": res.best_s,
            "abs_S": abs(res.best_s),
            "evaluations": res.evaluations,
        }
    ]
    curve = [{"delta_deg": _deg(d), "S": s} for d, s in res.curve]
    meta = _base_meta("scan", model, rule)
    meta["step_deg"] = step_deg
    return OutputDocument("scan", {"best": best, "curve": curve}, meta)


def cmd_mc(args: argparse.Namespace, cfg: dict) -> OutputDocument:
    model = _model(args, cfg)
    q = _quad(args, cfg)
    pair = _pair(args, cfg) if q is None else None
    if q is None and pair is None:
        raise UsageError("mc needs --alpha/--beta or --angles")
    meta = _base_meta("mc", model)
    run = _run_config(model, args, cfg, meta)

    if q is not None:
        meta["settings_deg"] = list(q.degrees())
        samples = simulate_chsh(run, q)
        tallies = [s.tally() for s in samples]
        estimates = [t.estimate() for t in tallies]
        result = chsh_from_estimates(estimates)
        tables = _chsh_tables(q, result, [e.stderr for e in estimates])
        tables["tallies"] = _tally_rows(zip(_QUAD_IDS, tallies))
        ids = _QUAD_IDS
        kind = "chsh"
        settings = CoincidenceConfig(1, {0: q.alpha, 1: q.alpha_prime}, {0: q.beta, 1: q.beta_prime})
    else:
        alpha, beta = pair  # type: ignore[misc]
        meta["settings_deg"] = [_deg(alpha), _deg(beta)]
        samples = [simulate_pairs(run, alpha, beta)]
        tally = samples[0].tally()
        tables = {
            "estimates": _estimate_rows([((0, 0), tally)], angles=[(alpha, beta)]),
            "tallies": _tally_rows([((0, 0), tally)]),
        }
        ids = ((0, 0),)
        kind = "correlation"
        settings = CoincidenceConfig(1, {0: alpha}, {0: beta})

    events_path = _pick(args, cfg, "emit_events")
    if events_path is not None:
        dt = int(_pick(args, cfg, "dt_ns", DEFAULT_DT_NS))
        cols = events_from_samples([(a, b, s) for (a, b), s in zip(ids, samples)], dt)
        settings_path = _pick(args, cfg, "emit_settings") or _settings_path_for(events_path)
        try:
            write_events(cols, events_path)
            write_settings(settings, settings_path)
        except OSError as exc:
            raise IOFailure(f"cannot write events: {exc}") from None
        meta["dt_ns"] = dt
    return OutputDocument(kind, tables, meta)


def _settings_path_for(events_path: str) -> str:
    return str(Path(events_path).with_suffix(".settings.toml"))


class IOFailure(Exception):
    pass


def cmd_ingest(args: argparse.Namespace, cfg: dict) -> OutputDocument:
    files = args.files
    settings_path = _pick(args, cfg, "settings") or _settings_path_for(files[0])
    window = _pick(args, cfg, "window_ns")
    try:
        settings = load_settings(settings_path, window)
    except OSError as exc:
        raise IOFailure(f"cannot read settings {settings_path}: {exc}") from None
    parts = []
    for f in files:
        try:
            parts.append(read_event_columns(f))
        except OSError as exc:
            raise IOFailure(f"cannot read {f}: {exc}") from None
        except EventFormatError as exc:
            raise UsageError(f"{f}: {exc}") from None
    events = merge_columns(parts)
    matches = match_coincidences(events.arm_events(1), events.arm_events(2), settings)
    tallies = sorted(tally_matches(matches, settings).items())
    tables = {
        "tallies": _tally_rows(tallies),
        "estimates": _estimate_rows(tallies, settings),
        "matching": [
            {
                "matched": matches.n_matches,
                "unmatched_arm1": matches.unmatched_arm1,
                "unmatched_arm2": matches.unmatched_arm2,
                "window_ns": int(settings.window_ns),
            }
        ],
    }
    keyed = dict(tallies)
    if all(k in keyed for k in _QUAD_IDS):
        q = SettingsQuad(
            settings.angle(1, 0), settings.angle(2, 0), settings.angle(1, 1), settings.angle(2, 1)
        )
        estimates = [keyed[k].estimate() for k in _QUAD_IDS]
        chsh = _chsh_tables(q, chsh_from_estimates(estimates), [e.stderr for e in estimates])
        tables["summary"] = chsh["summary"]
    meta = {
        "tool": "bellsim",
        "version": __version__,
        "command": "ingest",
        "files": [str(f) for f in files],
        "settings": str(settings_path),
    }
    return OutputDocument("tally", tables, meta)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--full-precision", action="store_true", help="shortest round-trip floats")
    common.add_argument("--config", help="TOML file supplying defaults for the flags")
    common.add_argument("-o", "--output", help="write the document here instead of stdout")

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--model", help=f"one of: {', '.join(MODELS)}")
    model_opts.add_argument("--nodes", type=int, help="quadrature nodes (amplitude / local models)")

    mc_opts = argparse.ArgumentParser(add_help=False)
    mc_opts.add_argument("--pairs", type=int, help=f"pairs per setting pair (default {DEFAULT_PAIRS})")
    mc_opts.add_argument("--seed", type=int, help=f"64-bit seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    mc_opts.add_argument("--shards", type=int, help="independent generator streams per run")

    p = argparse.ArgumentParser(prog="bellsim", description="Bell-test correlations and CHSH statistics.")
    p.add_argument("--version", action="version", version=f"bellsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analytic", parents=[common, model_opts], help="joint weights and E for two settings")
    a.add_argument("--alpha", type=float)
    a.add_argument("--beta", type=float)

    c = sub.add_parser("chsh", parents=[common, model_opts, mc_opts], help="CHSH S for four settings")
    c.add_argument("--angles", type=float, nargs=4, metavar=("A", "B", "A2", "B2"))
    c.add_argument("--mode", choices=("analytic", "counterfactual", "sequential", "mc"))

    s = sub.add_parser("scan", parents=[common, model_opts], help="maximize |S| over settings")
    s.add_argument("--step", type=float, help="family grid step in degrees; must divide 90")

    m = sub.add_parser("mc", parents=[common, model_opts, mc_opts], help="Monte Carlo run")
    m.add_argument("--alpha", type=float)
    m.add_argument("--beta", type=float)
    m.add_argument("--angles", type=float, nargs=4, metavar=("A", "B", "A2", "B2"))
    m.add_argument("--emit-events", dest="emit_events", help="also write the simulated event file")
    m.add_argument("--emit-settings", dest="emit_settings", help="settings file (default <events>.settings.toml)")
    m.add_argument("--dt-ns", dest="dt_ns", type=int, help=f"emission interval (default {DEFAULT_DT_NS})")

    i = sub.add_parser("ingest", parents=[common], help="tally coincidences from event files")
    i.add_argument("files", nargs="+")
    i.add_argument("--settings", help="settings TOML (default <first file>.settings.toml)")
    i.add_argument("--window-ns", dest="window_ns", type=int)
    return p


COMMANDS = {
    "analytic": cmd_analytic,
    "chsh": cmd_chsh,
    "scan": cmd_scan,
    "mc": cmd_mc,
    "ingest": cmd_ingest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        doc = COMMANDS[args.command](args, cfg)
        text = doc.render(args.format, args.full_precision)
    except (UsageError, DomainError, EventFormatError, ValueError) as exc:
        print(f"bellsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IOFailure, OSError) as exc:
        print(f"bellsim {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"bellsim {args.command}: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
