"""Command-line front end: reproducible pipelines over the library modules.

Every run writes a manifest next to its primary output recording the
resolved parameters, the seed, input digests and package versions, so any
result can be regenerated from scratch.  Numeric output is CSV or JSON only;
plotting is deliberately left to external tools.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import io as tbio
from . import models
from .core import TwbParams, PHOTON
from .detection import DetectorSpec, conditional_photon_dist, detection_matrix
from .errors import DataError, NumericError, TwinbeamError, UsageError
from .ingest import GroupingPolicy, group_histogram
from .metrology import precision_improvement
from .moments import (E_FAMILY, IDENTIFIERS, M_FAMILY, moments, ncd,
                      to_intensity_moments, fano_nrp_cov)
from .quasidist import grid_normalization, quasi_distribution
from .reconstruct import EmConfig, em_joint
from .simulate import PumpCorrelation, sample_stream

DEFAULT_GROUPS = (1, 2, 3, 5, 10, 20, 30, 50, 70, 100, 200, 300, 500, 700, 1000)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out: str, args: argparse.Namespace, inputs: list) -> None:
    manifest = {
        "command": args.command,
        "parameters": {k: v for k, v in vars(args).items()
                       if k not in ("command", "func") and v is not None},
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs
                   if os.path.exists(p)],
        "versions": {"twinbeam": _version(), "numpy": np.__version__},
    }
    tbio.write_json(manifest, out + ".manifest.json")


def _version() -> str:
    from . import __version__
    return __version__


def _load_params(path: str | None) -> tuple[TwbParams, DetectorSpec, DetectorSpec]:
    if path is None:
        return models.NOMINAL_PARAMS, models.NOMINAL_SIGNAL, models.NOMINAL_IDLER
    with open(path) as fh:
        raw = json.load(fh)
    params = TwbParams(**{k: raw[k] for k in
                          ("m_p", "m_s", "m_i", "b_p", "b_s", "b_i")})
    spec_s = DetectorSpec(raw.get("eta_s", models.NOMINAL_SIGNAL.eta),
                          raw.get("dark_s", models.NOMINAL_SIGNAL.dark), 1)
    spec_i = DetectorSpec(raw.get("eta_i", models.NOMINAL_IDLER.eta),
                          raw.get("dark_i", models.NOMINAL_IDLER.dark), 1)
    return params, spec_s, spec_i


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> list:
    """Expand ``--config FILE`` (``key = value`` lines) into leading flags.

    Values from the file come first, so explicit flags override them.
    """
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config needs a path")
    rest = argv[:idx] + argv[idx + 2:]
    injected = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line without '=': {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            injected += [f"--{key.replace('_', '-')}", value]
    return rest[:1] + injected + rest[1:]


# -- subcommands -------------------------------------------------------------

def _cmd_simulate(args) -> None:
    params, spec_s, spec_i = _load_params(args.params)
    pump = PumpCorrelation(args.k_pump, args.block_len)
    stream = sample_stream(params, spec_s, spec_i, pump, args.windows, args.seed)
    tbio.write_clicks(stream, args.out)
    _write_manifest(args.out, args, [args.params] if args.params else [])


def _cmd_analyze(args) -> None:
    stream = tbio.read_clicks(args.infile)
    policy = GroupingPolicy(args.group_n, args.mode)
    tbio.write_jhist(group_histogram(stream, policy), args.out)
    _write_manifest(args.out, args, [args.infile])


def _cmd_reconstruct(args) -> None:
    hist = tbio.read_jhist(args.hist)
    n = args.group_n if args.group_n else hist.policy.n
    cfg = EmConfig(max_iters=args.max_iters, tol=args.tol)
    eta_min = min(args.eta_s, args.eta_i)
    n_max = args.n_max if args.n_max else int(np.ceil(3 * (n + 5) / eta_min))
    if (n_max + 1) ** 2 > 50_000_000:
        raise UsageError(
            f"joint photon support {n_max + 1}^2 is too large to iterate; "
            "pass a smaller --n-max")
    t_s = detection_matrix(DetectorSpec(args.eta_s, args.dark_s, n), n_max)
    t_i = detection_matrix(DetectorSpec(args.eta_i, args.dark_i, n), n_max)
    dist, result = em_joint(hist, t_s, t_i, cfg)
    tbio.write_jdist(dist, args.out)
    _write_manifest(args.out, args, [args.hist])
    print(f"converged={result.converged} iterations={result.iterations} "
          f"final_change={result.final_change:.3e}")


def _cmd_ncd(args) -> None:
    dist = tbio.read_jdist(args.dist)
    wanted = args.identifiers.split(",")
    unknown = [w for w in wanted if w not in IDENTIFIERS]
    if unknown:
        raise UsageError(f"unknown identifiers: {unknown}")
    normal = to_intensity_moments(moments(dist, order=5))
    report = {}
    for ident in wanted:
        outcome = ncd(normal, ident)
        report[ident] = {
            "tau": outcome.tau,
            "s_threshold": outcome.s_threshold,
            "nonclassical": outcome.nonclassical,
            "value_at_normal_ordering": outcome.value_at_normal,
            "saturated": outcome.saturated,
        }
    tbio.write_json(report, args.out)
    _write_manifest(args.out, args, [args.dist])


def _cmd_quasidist(args) -> None:
    dist = tbio.read_jdist(args.dist)
    if dist.kind != PHOTON:
        raise DataError("quasi-distribution needs a photon-number input")
    grid = quasi_distribution(dist, args.s, args.w_max, args.w_max, args.steps)
    tbio.write_igrid(grid, args.out)
    _write_manifest(args.out, args, [args.dist])
    print(f"normalization={grid_normalization(grid):.6f} "
          f"min={grid.values.min():.4e}")


def _cmd_metrology(args) -> None:
    stream = tbio.read_clicks(args.infile)
    result = precision_improvement(stream, args.group_n, args.nm)
    report = {key: (dataclasses.asdict(val)
                    if dataclasses.is_dataclass(val) else val)
              for key, val in result.items()}
    tbio.write_json(report, args.out)
    _write_manifest(args.out, args, [args.infile])


def _sweep_row(metric: str, n: int, params, spec_s, spec_i, k: float) -> dict:
    row = {"n": n}
    if metric in ("mean", "fano", "nrp", "covariance"):
        compound = moments(models.compound_click_dist(params, spec_s, spec_i, n), 2)
        genuine = moments(models.genuine_click_dist(params, spec_s, spec_i, n), 2)
        for label, table in (("compound", compound), ("genuine", genuine)):
            stats = fano_nrp_cov(table)
            if metric == "mean":
                row[f"{label}_mean_s"] = table[1, 0]
                row[f"{label}_mean_i"] = table[0, 1]
            elif metric == "fano":
                row[f"{label}_fano_s"] = stats["fano_s"]
                row[f"{label}_fano_i"] = stats["fano_i"]
            elif metric == "nrp":
                row[f"{label}_nrp"] = stats["nrp"]
            else:
                row[f"{label}_covariance"] = stats["covariance"]
        if k > 0 and metric in ("mean", "fano", "nrp"):
            g = models.grouped_click_moments(params, spec_s, spec_i, k, n)
            row["drift_mean_i"] = g["mean_i"]
            row["drift_fano_i"] = g["var_i"] / g["mean_i"]
            row["drift_nrp"] = ((g["var_s"] + g["var_i"] - 2 * g["cov"])
                                / (g["mean_s"] + g["mean_i"]))
    elif metric == "eta-eff":
        g = models.grouped_click_moments(params, spec_s, spec_i, k, n)
        row["eta_eff_s"] = g["cov"] / g["mean_i"]
        row["eta_eff_i"] = g["cov"] / g["mean_s"]
    elif metric in ("tau-e", "tau-m"):
        idents = E_FAMILY if metric == "tau-e" else M_FAMILY
        for label, dist in (
                ("compound", models.compound_click_dist(params, spec_s, spec_i, n)),
                ("genuine", models.genuine_click_dist(params, spec_s, spec_i, n))):
            normal = to_intensity_moments(moments(dist, 5))
            for ident in idents:
                row[f"{label}_tau_{ident}"] = ncd(normal, ident).tau
    elif metric == "postselect":
        dist = models.compound_click_dist(params, spec_s, spec_i, n)
        marg_s = dist.table.sum(axis=1)
        eligible = np.nonzero(marg_s >= 1e-3)[0]
        best_c, best_f, best_mean = -1, np.inf, 0.0
        for c_s in eligible:
            cond = dist.table[c_s, :] / marg_s[c_s]
            mean = cond @ np.arange(len(cond))
            if mean == 0:
                continue
            var = cond @ (np.arange(len(cond)) - mean) ** 2
            if var / mean < best_f:
                best_c, best_f, best_mean = int(c_s), var / mean, mean
        photon = conditional_photon_dist(models.joint_twb(params), spec_s,
                                         best_c, n)
        row.update(c_s_opt=best_c, fano_click=best_f, mean_click=best_mean,
                   p_success=marg_s[best_c], mean_photon=photon.mean(),
                   fano_photon=photon.fano())
    elif metric == "precision":
        p_s, p_i, p11 = models.window_click_probs(params, spec_s, spec_i)
        row["norm_rel_err_ref_s"] = np.sqrt(1 - p_s)
        row["norm_rel_err_ref_i"] = np.sqrt(1 - p_i)
        row["norm_rel_err_cond_on_s"] = np.sqrt(1 - p11 / p_s)
        row["norm_rel_err_cond_on_i"] = np.sqrt(1 - p11 / p_i)
        row["S_cs"] = row["norm_rel_err_cond_on_s"] / row["norm_rel_err_ref_i"]
        row["S_ci"] = row["norm_rel_err_cond_on_i"] / row["norm_rel_err_ref_s"]
    else:
        raise UsageError(f"unknown metric {metric!r}")
    return row


def _cmd_sweep(args) -> None:
    params, spec_s, spec_i = _load_params(args.params)
    if args.k_pump > 0 and args.metric in ("covariance", "tau-e", "tau-m",
                                           "postselect", "precision"):
        raise UsageError(f"metric {args.metric!r} has no pump-drift model; "
                         "drop --k-pump")
    groups = [int(g) for g in args.groups.split(",")] if args.groups \
        else list(DEFAULT_GROUPS)
    rows = [_sweep_row(args.metric, n, params, spec_s, spec_i, args.k_pump)
            for n in groups]
    keys = list(rows[0])
    lines = [",".join(keys)]
    lines += [",".join(repr(float(row[k])) if isinstance(row[k], (float, np.floating))
                       else str(row[k]) for k in keys) for row in rows]
    payload = "\n".join(lines) + "\n"
    if args.out:
        from .io import _atomic_write
        _atomic_write(args.out, payload.encode())
        _write_manifest(args.out, args, [args.params] if args.params else [])
    else:
        sys.stdout.write(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinbeam",
        description="simulate and analyze compound twin beams")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a click stream")
    sim.add_argument("--windows", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--params", help="JSON file with beam/detector parameters")
    sim.add_argument("--k-pump", type=float, default=0.0)
    sim.add_argument("--block-len", type=int, default=10_000)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate)

    ana = sub.add_parser("analyze", help="group a stream into a histogram")
    ana.add_argument("--in", dest="infile", required=True)
    ana.add_argument("--group-n", type=int, required=True)
    ana.add_argument("--mode", choices=("sliding", "disjoint"),
                     default="sliding")
    ana.add_argument("--out", required=True)
    ana.set_defaults(func=_cmd_analyze)

    rec = sub.add_parser("reconstruct", help="photon statistics from a histogram")
    rec.add_argument("--hist", required=True)
    rec.add_argument("--eta-s", type=float, required=True)
    rec.add_argument("--eta-i", type=float, required=True)
    rec.add_argument("--dark-s", type=float, default=0.0)
    rec.add_argument("--dark-i", type=float, default=0.0)
    rec.add_argument("--group-n", type=int)
    rec.add_argument("--tol", type=float, default=1e-9)
    rec.add_argument("--max-iters", type=int, default=10_000)
    rec.add_argument("--n-max", type=int)
    rec.add_argument("--out", required=True)
    rec.set_defaults(func=_cmd_reconstruct)

    ncd_cmd = sub.add_parser("ncd", help="non-classicality depths")
    ncd_cmd.add_argument("--dist", required=True)
    ncd_cmd.add_argument("--identifiers", default="E001,M1001")
    ncd_cmd.add_argument("--out", required=True)
    ncd_cmd.set_defaults(func=_cmd_ncd)

    qd = sub.add_parser("quasidist", help="intensity quasi-distribution grid")
    qd.add_argument("--dist", required=True)
    qd.add_argument("--s", type=float, required=True)
    qd.add_argument("--w-max", type=float)
    qd.add_argument("--steps", type=int, default=256)
    qd.add_argument("--out", required=True)
    qd.set_defaults(func=_cmd_quasidist)

    met = sub.add_parser("metrology", help="sub-shot-noise precision report")
    met.add_argument("--in", dest="infile", required=True)
    met.add_argument("--group-n", type=int, required=True)
    met.add_argument("--nm", type=int, default=500)
    met.add_argument("--out", required=True)
    met.set_defaults(func=_cmd_metrology)

    sw = sub.add_parser("sweep", help="model curves over group sizes")
    sw.add_argument("--metric", required=True,
                    choices=("mean", "fano", "nrp", "covariance", "eta-eff",
                             "tau-e", "tau-m", "postselect", "precision"))
    sw.add_argument("--groups", help="comma list, default 1..1000 ladder")
    sw.add_argument("--params")
    sw.add_argument("--k-pump", type=float, default=0.0)
    sw.add_argument("--out")
    sw.set_defaults(func=_cmd_sweep)
    return parser


def _apply_thread_override() -> None:
    """Cap the linear-algebra thread pools from ``TWINBEAM_THREADS``."""
    threads = os.environ.get("TWINBEAM_THREADS")
    if not threads:
        return
    try:
        count = int(threads)
    except ValueError:
        raise UsageError(f"TWINBEAM_THREADS must be an integer, got {threads!r}")
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=count)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(count)


def main(argv: list | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_thread_override()
        argv = _apply_config(parser, list(argv))
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except TwinbeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
