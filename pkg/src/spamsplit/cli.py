"""Command-line entry point: ``spamsplit <command> [options]``.

Each run writes to ``<out>/<command>/<timestamp>-<seed>/`` a
``manifest.json`` plus the result files listed below. Set
``SOURCE_DATE_EPOCH`` to pin the timestamp; all other bytes depend only on
the configuration and the seed.

Output columns
--------------
rabief        signals.csv   reset_mode, theta, s_nopi, s_pi
              fits.json, summary.json (p_sp_hat, true mean/std per reset mode)
workflow      model.json (learned model), fits.json
mcb           expectations.csv   k, IZ, IZ_stderr, ZI, ZI_stderr, ZZ, ZZ_stderr
              fits.json, records.json (per-randomization counts)
mitigate-ghz  ghz.csv   n, raw, raw_sigma, zstar, zstar_sigma, trex, trex_sigma, split, split_sigma
              ghz.json
pec-teleport  fidelity.csv   theta, median, q25, q75, unmitigated
              fidelity.json
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import io
from .config import Config, ConfigError, load_config
from .experiments.mcb import McbConfig, mcb_expectations, simulate_mcb, fit_mcb
from .experiments.rabief import RabiefConfig, run_rabief
from .fitting import Estimate, FitError
from .learning import LearnedModel, MeasurementNoise, run_workflow
from .mitigation.ghz import run_ghz_mitigation
from .mitigation.pec import teleportation_table
from .mitigation.tomography import TomographyError
from .ptm import NoiseFidelities
from .rng import stream
from .sim.circuit import SimulationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (ArithmeticError, FitError, SimulationError, TomographyError, np.linalg.LinAlgError)


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    # results keep input order, and every task owns its RNG stream
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _noise(cfg: Config) -> MeasurementNoise:
    m = cfg["mcb"]
    return MeasurementNoise(
        float(m["f_a"]), float(m["f_s"]), float(m["f_c"]), float(m["p_sp_slow"]), float(m["p_sp_fast"])
    )


def _injected(cfg: Config, reset: str = "slow") -> NoiseFidelities:
    return _noise(cfg).fidelities(reset)


def _load_model(path: Optional[str], cfg: Config) -> LearnedModel:
    """Model file, or the injected noise as an exact model when no file is given."""
    if path is not None:
        try:
            return LearnedModel.from_json(Path(path).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read model {path}: {exc}") from exc
    n = _noise(cfg)
    return LearnedModel(
        Estimate(n.f_a), Estimate(n.f_s), Estimate(n.f_c),
        Estimate(1 - 2 * n.p_sp_slow), Estimate(1 - 2 * n.p_sp_fast), path="injected",
    )


def _mcb_config(cfg: Config, reset: Optional[str] = None) -> McbConfig:
    m = cfg["mcb"]
    return McbConfig(tuple(m["depths"]), int(m["randomizations"]), int(m["shots"]), reset or m["reset_mode"])


def _rabief_config(cfg: Config, mode: str) -> RabiefConfig:
    r = cfg["rabief"]
    angles = np.linspace(0.0, float(r["max_angle"]), int(r["n_angles"]))
    return RabiefConfig(angles, int(r["shots"]), mode, r["reset_sampling"], r["signal"])


# -- commands -----------------------------------------------------------------


def cmd_rabief(args, cfg: Config, run_dir: Path) -> list[Path]:
    params = cfg.device()
    modes = list(cfg["rabief"]["reset_modes"])
    shared = bool(cfg["rabief"]["shared_frequency"])

    def one(mode):
        return run_rabief(params, _rabief_config(cfg, mode), stream(args.seed, "rabief", mode), args.exact, shared)

    results = dict(zip(modes, _map(one, modes, args.threads)))
    rows = [
        (mode, float(t), float(a), float(b))
        for mode, res in results.items()
        for t, a, b in zip(res.data.angles, res.data.s_nopi, res.data.s_pi)
    ]
    return [
        io.write_csv(run_dir / "signals.csv", ["reset_mode", "theta", "s_nopi", "s_pi"], rows),
        io.write_json(
            run_dir / "fits.json",
            {m: {"nopi": r.nopi_fit.to_dict(), "pi": r.pi_fit.to_dict()} for m, r in results.items()},
        ),
        io.write_json(run_dir / "summary.json", {m: r.summary() for m, r in results.items()}),
    ]


def cmd_workflow(args, cfg: Config, run_dir: Path) -> list[Path]:
    mode = "fast_qutrit" if args.path == "blue" else "slow_qutrit"
    res = run_workflow(
        args.path == "blue",
        cfg.device(),
        _noise(cfg),
        _rabief_config(cfg, mode),
        _mcb_config(cfg),
        stream(args.seed, "workflow"),
        args.exact,
    )
    res.model.seed = args.seed
    res.model.timestamp = args.timestamp
    return [
        io.write_json(run_dir / "model.json", res.model.to_dict()),
        io.write_json(run_dir / "fits.json", res.intermediate_fits()),
    ]


def cmd_mcb(args, cfg: Config, run_dir: Path) -> list[Path]:
    mcfg = _mcb_config(cfg)
    f = _injected(cfg, mcfg.reset_mode)
    records = simulate_mcb(f, mcfg, stream(args.seed, "mcb"), args.exact)
    exps = mcb_expectations(records)
    fits = fit_mcb(exps, constant_fallback=True)
    obs = ("IZ", "ZI", "ZZ")
    rows = [
        [k] + [x for o in obs for x in (exps[k][o].value, exps[k][o].stderr)] for k in sorted(exps)
    ]
    cols = ["k"] + [c for o in obs for c in (o, f"{o}_stderr")]
    recs = [
        {"k": r.k, "twirls": [[t.x, t.z1, t.z2] for t in r.twirls], "counts": np.asarray(r.counts).tolist()}
        for r in records
    ]
    return [
        io.write_csv(run_dir / "expectations.csv", cols, rows),
        io.write_json(run_dir / "fits.json", {o: fit.to_dict() for o, fit in fits.items()}),
        io.write_json(run_dir / "records.json", recs),
    ]


def cmd_mitigate_ghz(args, cfg: Config, run_dir: Path) -> list[Path]:
    g = cfg["mitigation"]
    model = _load_model(args.model, cfg)
    ns = [int(n) for n in (args.n or g["n_qubits"])]
    f_sp = model.f_sp("slow")

    def one(n):
        return run_ghz_mitigation(
            [n], _injected(cfg), f_sp, lambda n_, task: stream(args.seed, "ghz", n_, task),
            args.exact, bool(g["two_layer"]), g["correlated_as"],
        )[0]

    rows = [r.to_dict() for r in _map(one, ns, args.threads)]
    cols = list(rows[0])
    return [
        io.write_csv(run_dir / "ghz.csv", cols, [[r[c] for c in cols] for r in rows]),
        io.write_json(run_dir / "ghz.json", rows),
    ]


def cmd_pec_teleport(args, cfg: Config, run_dir: Path) -> list[Path]:
    p = cfg["pec"]
    model = _load_model(args.model, cfg)
    thetas = np.linspace(0.0, 2 * np.pi, int(p["n_thetas"]))

    def one(i):
        return teleportation_table(
            model, _injected(cfg), [thetas[i]],
            lambda _, task: stream(args.seed, "pec", i, task),
            int(p["pool"]), int(p["sets"]), int(p["per_set"]), int(p["shots"]),
            pec=not args.no_pec, exact=args.exact,
        )[0]

    rows = [r.to_dict() for r in _map(one, list(range(len(thetas))), args.threads)]
    cols = ["theta", "median", "q25", "q75", "unmitigated"]
    return [
        io.write_csv(run_dir / "fidelity.csv", cols, [[r[c] for c in cols] for r in rows]),
        io.write_json(run_dir / "fidelity.json", rows),
    ]


COMMANDS = {
    "rabief": cmd_rabief,
    "workflow": cmd_workflow,
    "mcb": cmd_mcb,
    "mitigate-ghz": cmd_mitigate_ghz,
    "pec-teleport": cmd_pec_teleport,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with device/rabief/mcb/mitigation/pec sections")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--out", default="out")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--exact", action="store_true", help="exact expectations, no sampling")

    ap = argparse.ArgumentParser(
        prog="spamsplit", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("rabief", parents=[common], help="RabiEF for each reset mode")
    wf = sub.add_parser("workflow", parents=[common], help="learn the SPAM model")
    wf.add_argument("--path", choices=("purple", "blue"), default="purple",
                    help="blue: stable fast qutrit reset; purple: otherwise")
    sub.add_parser("mcb", parents=[common], help="measurement cycle benchmarking")
    gh = sub.add_parser("mitigate-ghz", parents=[common], help="TREX vs split mitigation of <X^n>")
    gh.add_argument("--model", help="learned model JSON (default: injected noise)")
    gh.add_argument("--n", type=int, nargs="+", help="qubit counts")
    pe = sub.add_parser("pec-teleport", parents=[common], help="PEC of the teleportation circuit")
    pe.add_argument("--model", help="learned model JSON (default: injected noise)")
    pe.add_argument("--no-pec", action="store_true", help="unmitigated fidelities only")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.timestamp = io.run_timestamp()
        run_dir = io.run_directory(Path(args.out), args.command, args.timestamp, args.seed)
        artifacts = COMMANDS[args.command](args, cfg, run_dir)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        # ValueError here comes from parameter validation of the configured experiments
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io.write_manifest(run_dir, args.command, args.config, args.seed, args.timestamp, artifacts)
    print(run_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
