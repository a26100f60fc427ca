"""Command line front end: ``randlyap {le, verify, h3scan, density, report}``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage,
configuration or precondition errors.  Outputs are deterministic functions
of the configuration, the seed and the package version, and every artifact
carries the manifest hash.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, default_config, load
from .errors import ConfigError, H3Failed, InvalidC, PreconditionError
from .scalar_maps import find_critical_sets, map_from_spec, h3_sweep
from .suites import SUITES, le_cell, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    command: str
    seeds: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def make_manifest(cfg: ExperimentConfig, command: str, streams: dict) -> RunManifest:
    seed = int(cfg["noise"]["seed"])
    return RunManifest(cfg.digest(), __version__, command,
                       {k: [seed, int(v)] for k, v in sorted(streams.items())})


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def render_csv(rows: list[dict], manifest: RunManifest) -> str:
    if not rows:
        raise ValueError("nothing to write")
    cols = list(rows[0]) + ["manifest"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols[:-1]] + [manifest.digest])
    return buf.getvalue()


def render_json(payload, manifest: RunManifest) -> str:
    doc = {"manifest": {**asdict(manifest), "digest": manifest.digest}, "results": payload}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the shutdown flush
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())


def _flatten_checks(results) -> list[dict]:
    rows = []
    for res in results:
        for c in res.checks:
            rows.append({"suite": res.suite, "check": c.name, "passed": c.passed,
                         "informational": c.informational,
                         "values": json.dumps(c.values, sort_keys=True, default=_json_default)})
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _le_job(args):
    cfg_data, L, eps, sid = args
    return le_cell(ExperimentConfig(cfg_data), L, eps, sid)


def cmd_le(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[dict], RunManifest]:
    Ls, epss = cfg["sweep"]["L"], cfg["sweep"]["epsilon"]
    if not Ls or not epss:
        raise ConfigError("the sweep needs at least one L and one epsilon")
    cells = [(cfg.data, L, e, 1000 + k) for k, (L, e) in enumerate((L, e) for e in epss for L in Ls)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_le_job, cells))
    else:
        rows = [_le_job(c) for c in cells]
    man = make_manifest(cfg, "le", {f"cell{k}": c[3] for k, c in enumerate(cells)})
    return rows, man


def cmd_verify(cfg: ExperimentConfig, suite: str):
    res = run_suite(suite, cfg)
    return res, make_manifest(cfg, f"verify:{suite}", {"suite": 0})


def cmd_h3scan(cfg: ExperimentConfig, c_list=None) -> tuple[list[dict], RunManifest]:
    fmap = map_from_spec(cfg["map"])
    crit = find_critical_sets(fmap)
    c_vals = list(c_list or cfg["sweep"]["c"])
    a_grid, holds = h3_sweep(fmap, crit, c_vals, int(cfg["sweep"]["a_grid"]))
    rows = []
    for i, c in enumerate(c_vals):
        frac = float(holds[i].mean())
        for a, h in zip(a_grid, holds[i]):
            rows.append({"L": fmap.L, "c": float(c), "a": float(a), "holds": bool(h), "pass_fraction": frac})
    return rows, make_manifest(cfg, "h3scan", {})


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format (overrides output.format)")
    p = argparse.ArgumentParser(prog="randlyap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("le", parents=[common], help="Lyapunov exponent sweep over L and epsilon")
    v = sub.add_parser("verify", parents=[common], help="run one verification suite")
    v.add_argument("suite", choices=SUITES)
    h = sub.add_parser("h3scan", parents=[common], help="scan the offset a for the (H3) condition")
    h.add_argument("--c", type=float, nargs="+", dest="c_list", help="c values (overrides sweep.c)")
    sub.add_parser("density", parents=[common], help="alias for 'verify density'")
    sub.add_parser("report", parents=[common], help="run every suite and summarise")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load(args.config) if args.config else default_config()
        cfg = cfg.with_overrides(noise__seed=args.seed, output__format=args.format, output__path=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        fmt, out = cfg["output"]["format"], cfg["output"]["path"]
        if args.command == "le":
            rows, man = cmd_le(cfg, args.threads)
            _emit(render_csv(rows, man) if fmt == "csv" else render_json(rows, man), out)
            return EXIT_OK
        if args.command == "h3scan":
            rows, man = cmd_h3scan(cfg, args.c_list)
            _emit(render_csv(rows, man) if fmt == "csv" else render_json(rows, man), out)
            return EXIT_OK
        if args.command in ("verify", "density"):
            suite = "density" if args.command == "density" else args.suite
            res, man = cmd_verify(cfg, suite)
            results = [res]
        else:
            man = make_manifest(cfg, "report", {s: 0 for s in SUITES})
            results = [run_suite(s, cfg) for s in SUITES]
        if fmt == "csv":
            _emit(render_csv(_flatten_checks(results), man), out)
        else:
            _emit(render_json([r.to_dict() for r in results], man), out)
        failed = [f"{r.suite}:{r.first_failure()}" for r in results if not r.passed]
        if failed:
            print("FAILED " + ", ".join(failed), file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    except (ConfigError, PreconditionError, InvalidC, H3Failed, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
