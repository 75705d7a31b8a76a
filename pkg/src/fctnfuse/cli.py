"""Command-line driver: ``simulate``, ``fuse``, ``ablate`` and ``oracle-check``.

Options come from an optional ``--config`` file (TOML, or a JSON run
manifest written by a previous run) and are overridden by explicit flags.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .io import load_npy, read_manifest, save_npy, sha256, write_history, write_manifest
from .metrics import append_csv, empty_report, evaluate
from .oracle import FAULTS, run_checks
from .solver import FusionConfig, FusionError, fuse
from .synthetic import make_scene
from .tensor import NumericalError
from .tensorize import DegradationModel, TensorizationPlan, load_srf, save_srf

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("fctnfuse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "ref": None,
    "hsi": None,
    "msi": None,
    "srf": None,
    "out": "out",
    "lambda": 0.1,
    "mu": 120.0,
    "beta": 0.1,
    "sigma": 10.0,
    "graph_k": 1,
    "max_iter": 480,
    "seed": 0,
    "noise_seed": None,
    "p": 8,
    "snr_hsi": None,
    "snr_msi": None,
    "ranks": None,
    "plan": None,
    "cg_tol": 1e-8,
    "cg_max_iter": 500,
    "lam_on_y": False,
    "run_id": None,
    "synthetic": False,
    "bands": 16,
    "n_msi": 4,
    "scene_ranks": None,
}


class ConfigError(ValueError):
    pass


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="TOML config or JSON manifest of an earlier run")
    sp.add_argument("--ref", help="reference HR-HSI cube (.npy, M x N x S)")
    sp.add_argument("--hsi", help="low-resolution HSI (.npy, m x n x S)")
    sp.add_argument("--msi", help="high-resolution MSI (.npy, M x N x s)")
    sp.add_argument("--srf", help="spectral response, CSV with s rows and S columns")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--lambda", dest="lambda", type=float, help="MSI-term weight (default 0.1)")
    sp.add_argument("--mu", type=float, help="ridge weight (default 120)")
    sp.add_argument("--beta", type=float, help="graph-regularization weight (default 0.1)")
    sp.add_argument("--sigma", type=float, help="band-similarity bandwidth (default 10)")
    sp.add_argument("--graph-k", type=int, help="band adjacency half-width (default 1)")
    sp.add_argument("--max-iter", type=int, help="outer iterations (default 480)")
    sp.add_argument("--seed", type=int, help="initialization seed")
    sp.add_argument("--noise-seed", type=int, help="degradation noise seed (default: --seed)")
    sp.add_argument("--p", type=int, help="spatial downsampling factor (default 8)")
    sp.add_argument("--snr-hsi", type=float, help="noise level of the simulated HSI, dB")
    sp.add_argument("--snr-msi", type=float, help="noise level of the simulated MSI, dB")
    sp.add_argument("--ranks", help="bond ranks r12,r13,...; a single value sets all")
    sp.add_argument("--plan", help='per-scale spatial factors, e.g. "8x8,5x5,2x2,3x3"')
    sp.add_argument("--cg-tol", type=float)
    sp.add_argument("--cg-max-iter", type=int)
    sp.add_argument("--lam-on-y", action="store_true", default=None,
                    help="put lambda on the HSI term instead of the MSI term")
    sp.add_argument("--run-id")
    sp.add_argument("--synthetic", action="store_true", default=None,
                    help="generate the reference cube from a random FCTN scene")
    sp.add_argument("--bands", type=int, help="band count of a synthetic scene")
    sp.add_argument("--n-msi", type=int, help="MSI band count of a synthetic SRF")
    sp.add_argument("--scene-ranks", help="bond ranks of the synthetic scene (default: --ranks)")
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fctnfuse",
        description="Hyperspectral/multispectral image fusion with FCTN factors.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "degrade a reference cube into an HSI/MSI pair"),
        ("fuse", "reconstruct the HR-HSI and write metrics"),
        ("ablate", "run fuse with and without graph regularization"),
    ]:
        _add_common(sub.add_parser(name, help=help_))
    oc = sub.add_parser("oracle-check", help="run the built-in numerical self-test")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--inject-fault", choices=sorted(FAULTS), help=argparse.SUPPRESS)
    return parser


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    if path.suffix == ".json":
        data = read_manifest(path)
        data = data.get("options", data)
    else:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        opts.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if opts["noise_seed"] is None:
        opts["noise_seed"] = opts["seed"]
    if isinstance(opts["ranks"], (list, tuple)):
        opts["ranks"] = ",".join(str(int(v)) for v in opts["ranks"])
    return opts


def _parse_ranks(text):
    if text is None:
        return None
    if isinstance(text, (int, np.integer)):
        return int(text)
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --ranks {text!r}") from exc
    return vals[0] if len(vals) == 1 else vals


def _plan(opts: dict, bands: int) -> TensorizationPlan:
    if not opts["plan"]:
        raise ConfigError("--plan is required (e.g. --plan 4x4,8x8)")
    return TensorizationPlan.parse(str(opts["plan"]), bands)


def _config(opts: dict, plan: TensorizationPlan, beta=None) -> FusionConfig:
    return FusionConfig(
        plan=plan,
        p=int(opts["p"]),
        ranks=_parse_ranks(opts["ranks"]),
        lam=float(opts["lambda"]),
        mu=float(opts["mu"]),
        beta=float(opts["beta"] if beta is None else beta),
        sigma=float(opts["sigma"]),
        graph_k=int(opts["graph_k"]),
        max_iter=int(opts["max_iter"]),
        seed=int(opts["seed"]),
        cg_tol=float(opts["cg_tol"]),
        cg_max_iter=int(opts["cg_max_iter"]),
        lam_on_y=bool(opts["lam_on_y"]),
    )


def _reference(opts: dict, out: Path):
    """Load or synthesize the reference cube and SRF."""
    if opts["synthetic"]:
        bands = int(opts["bands"])
        plan = _plan(opts, bands)
        ranks = _parse_ranks(opts["scene_ranks"]) or _parse_ranks(opts["ranks"]) or 3
        scene = make_scene(plan, ranks, int(opts["seed"]), n_msi=int(opts["n_msi"]))
        srf = load_srf(opts["srf"]) if opts["srf"] else scene.srf
        save_npy(out / "ref.npy", scene.x)
        return scene.x, srf
    if not opts["ref"]:
        raise ConfigError("a reference cube (--ref or --synthetic) is required")
    if not opts["srf"]:
        raise ConfigError("--srf is required with --ref")
    return load_npy(opts["ref"]), load_srf(opts["srf"])


def _degrade(opts: dict, x, srf):
    model = DegradationModel(srf, int(opts["p"]), opts["snr_hsi"], opts["snr_msi"])
    seed = int(opts["noise_seed"])
    return model.observe(x, seed_hsi=[seed, 1], seed_msi=[seed, 2])


def _inputs(opts: dict, out: Path):
    """Return ``(y, z, srf, ref_or_None)`` per the exclusive input modes."""
    have_pair = bool(opts["hsi"]) and bool(opts["msi"])
    have_ref = bool(opts["ref"]) or bool(opts["synthetic"])
    if have_pair == have_ref:
        raise ConfigError("provide exactly one of: a reference cube, or both --hsi and --msi")
    if have_ref:
        x, srf = _reference(opts, out)
        y, z = _degrade(opts, x, srf)
        return y, z, srf, x
    if not opts["srf"]:
        raise ConfigError("--srf is required with --hsi/--msi")
    return load_npy(opts["hsi"]), load_npy(opts["msi"]), load_srf(opts["srf"]), None


def _manifest(command: str, opts: dict, out: Path, cfg=None, extra=None) -> dict:
    inputs = {}
    for key in ("ref", "hsi", "msi", "srf"):
        if opts.get(key):
            inputs[key] = {"path": str(opts[key]), "sha256": sha256(opts[key])}
    payload = {
        "command": command,
        "version": __version__,
        "numpy": np.__version__,
        "options": opts,
        "inputs": inputs,
        "seeds": {"init": opts["seed"], "noise": opts["noise_seed"]},
    }
    if cfg is not None:
        payload["resolved_config"] = cfg.to_dict()
    if extra:
        payload.update(extra)
    return payload


def run_simulate(opts: dict) -> dict:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    if not (opts["ref"] or opts["synthetic"]):
        raise ConfigError("simulate needs --ref or --synthetic")
    x, srf = _reference(opts, out)
    y, z = _degrade(opts, x, srf)
    save_npy(out / "hsi.npy", y)
    save_npy(out / "msi.npy", z)
    save_srf(out / "srf.csv", srf)
    write_manifest(out / "manifest.json", _manifest("simulate", opts, out))
    log.info("wrote HSI %s and MSI %s to %s", y.shape, z.shape, out)
    return {"hsi": y, "msi": z, "srf": srf}


def _fuse_once(opts, y, z, srf, ref, cfg, run_id, out: Path, suffix=""):
    t0 = time.perf_counter()
    xhat, state = fuse(y, z, srf, cfg)
    seconds = time.perf_counter() - t0
    report = evaluate(ref, xhat, cfg.p) if ref is not None else empty_report(cfg.p)
    save_npy(out / f"xhat{suffix}.npy", xhat)
    write_history(out / f"objective{suffix}.csv", state.history_iterations, state.objective_history)
    return report.row(run_id, state.iterations, seconds), state


def run_fuse(opts: dict) -> dict:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    y, z, srf, ref = _inputs(opts, out)
    cfg = _config(opts, _plan(opts, y.shape[2]))
    run_id = opts["run_id"] or f"fuse-seed{cfg.seed}"
    row, state = _fuse_once(opts, y, z, srf, ref, cfg, run_id, out)
    append_csv(out / "metrics.csv", [row])
    write_manifest(out / "manifest.json", _manifest("fuse", opts, out, cfg,
                                                    {"cg_failures": state.cg_failures}))
    return row


def run_ablate(opts: dict) -> list:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    y, z, srf, ref = _inputs(opts, out)
    plan = _plan(opts, y.shape[2])
    base = opts["run_id"] or f"ablate-seed{opts['seed']}"
    rows = []
    for beta, tag in ((float(opts["beta"]), "wgr"), (0.0, "no_wgr")):
        cfg = _config(opts, plan, beta=beta)
        row, _ = _fuse_once(opts, y, z, srf, ref, cfg, f"{base}-{tag}", out, suffix=f"_{tag}")
        rows.append(row)
    append_csv(out / "ablation.csv", rows)
    write_manifest(out / "manifest.json", _manifest("ablate", opts, out, _config(opts, plan)))
    return rows


def run_oracle_check(seed: int = 0, fault=None) -> bool:
    t0 = time.perf_counter()
    results = run_checks(seed=seed, fault=fault)
    for res in results:
        print(res.line())
    ok = all(r.passed for r in results)
    print(f"{'PASS' if ok else 'FAIL'}  {sum(r.passed for r in results)}/{len(results)} checks "
          f"in {time.perf_counter() - t0:.2f}s")
    return ok


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "oracle-check":
            return EXIT_OK if run_oracle_check(args.seed, args.inject_fault) else EXIT_NUMERIC
        opts = resolve_options(args)
        if args.command == "simulate":
            run_simulate(opts)
        elif args.command == "fuse":
            row = run_fuse(opts)
            print(json.dumps(row))
        elif args.command == "ablate":
            for row in run_ablate(opts):
                print(json.dumps(row))
    except (FusionError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
