"""Command-line entry point.

Subcommands: ``run``, ``cluster``, ``gradcheck``, ``ingest-movielens``.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .data import (
    DataError,
    checkpoint_save,
    load_labels,
    load_tensor,
    make_split,
    movielens_genres,
    movielens_ingest,
    parse_side_spec,
    save_side_info,
    save_tensor,
)
from .evaluation import average_rmse, emit_csv
from .model import DenseSide, Hyperparams, SideInfoSet, init_model
from .runner import NumericalError, run_cluster, run_plan
from .tensor import SparseTensor

logger = logging.getLogger("streamtucker")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# fields that can be overridden from the command line
_FLAGS = ("tensor", "shape", "regime", "start_dims", "step_increments", "ranks", "lambda_g",
          "lambda_i", "gamma", "K", "nonnegative", "stale_core_residual", "missing_pct", "seed",
          "n_splits", "output", "threads", "deterministic", "timing", "weighted_average",
          "checkpoint", "labels", "w", "cluster_mode")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file; later flags override it")
    for name in _FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None, metavar="VALUE")
    p.add_argument("--side", action="append", default=[], metavar="MODE=SPEC",
                   help="side information for a mode: a file path or identity:<n>")
    p.add_argument("--backend", choices=("compiled", "python"), default=None)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for name in _FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            cfg.set(name, v)
    for item in args.side:
        if "=" not in item:
            raise ConfigError(f"--side expects MODE=SPEC, got {item!r}")
        mode, spec = item.split("=", 1)
        cfg.set(f"side.{mode}", spec)
    cfg.validate()
    return cfg


def _load_inputs(cfg: RunConfig):
    tensor = load_tensor(cfg.tensor, cfg.shape)
    sides = []
    for mode, dim in enumerate(cfg.shape):
        s = parse_side_spec(cfg.side_spec(mode))
        if s.rows != dim:
            raise DataError(f"side information for mode {mode} has {s.rows} rows, tensor has {dim}")
        sides.append(s)
    return tensor, SideInfoSet(sides)


def _write_provenance(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(
        f"# streamtucker {__version__}\n" + cfg.dump(), encoding="utf-8")


def _split_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def cmd_run(cfg: RunConfig, backend: str | None = None) -> int:
    tensor, side = _load_inputs(cfg)
    plan = cfg.plan()
    out = Path(cfg.output)
    _write_provenance(cfg, out)
    averages = []
    for k, split_seed in enumerate(_split_seeds(cfg.seed, cfg.n_splits)):
        split = make_split(tensor, cfg.missing_pct, split_seed)
        hp = cfg.hyperparams()
        hp.seed = split_seed
        res = run_plan(split.train, side, plan, cfg.ranks, hp, test=split.test, timing=cfg.timing,
                       nthreads=cfg.threads, deterministic=cfg.deterministic, backend=backend)
        emit_csv(res.records, out / f"split_{k}.csv")
        if cfg.checkpoint:
            checkpoint_save(res.model, hp, len(res.records) - 1, out / f"model_{k}.json")
        avg = average_rmse(res.records, weighted=cfg.weighted_average)
        averages.append(avg)
        logger.info("split %d: averaged test RMSE %.6f over %d steps", k, avg, len(res.records))
    summary = (f"splits={len(averages)} mean_avg_test_rmse={np.mean(averages):.6f} "
               f"per_split={','.join(f'{a:.6f}' for a in averages)}")
    (out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return EXIT_OK


def cmd_cluster(cfg: RunConfig, backend: str | None = None) -> int:
    if not cfg.labels:
        raise ConfigError("labels: a labels file is required for clustering")
    if not cfg.nonnegative:
        warnings.warn("clustering always runs the nonnegative variant; overriding nonnegative=false")
        cfg.nonnegative = True
    tensor, side = _load_inputs(cfg)
    if cfg.w > cfg.shape[cfg.cluster_mode]:
        raise ConfigError(f"w: {cfg.w} exceeds the {cfg.shape[cfg.cluster_mode]} items of mode {cfg.cluster_mode}")
    labels = load_labels(cfg.labels)
    out = Path(cfg.output)
    _write_provenance(cfg, out)
    _, reports = run_cluster(tensor, side, cfg.plan(), cfg.ranks, cfg.hyperparams(),
                             cfg.cluster_mode, labels, cfg.w, nthreads=cfg.threads,
                             deterministic=cfg.deterministic, backend=backend)
    with open(out / "purity.csv", "w", encoding="utf-8") as fh:
        fh.write("step,average_purity\n")
        for t, rep in enumerate(reports):
            fh.write(f"{t},{'' if np.isnan(rep.average_purity) else format(rep.average_purity, '.6f')}\n")
    final = reports[-1]
    with open(out / "clusters.txt", "w", encoding="utf-8") as fh:
        fh.write(f"mode={final.mode} w={final.w} average_purity={final.average_purity:.6f}\n")
        for col, items, pur in final.per_cluster:
            fh.write(f"{col}\t{pur:.6f}\t{' '.join(map(str, items))}\n")
    print(f"average_purity={final.average_purity:.6f}")
    return EXIT_OK


def cmd_gradcheck(dims, ranks, seed, widths=None, density=0.5, corrupt=False,
                  fd_tol=1e-5, oracle_tol=1e-10, backend=None) -> int:
    from . import oracle
    from .optimizer import gradients

    rng = np.random.default_rng(seed)
    widths = widths or dims
    if len(dims) != len(ranks) or len(widths) != len(dims):
        raise ConfigError("dims, ranks and widths must have the same length")
    side = SideInfoSet([DenseSide(rng.standard_normal((d, m))) for d, m in zip(dims, widths)])
    hp = Hyperparams(lambda_g=0.1, lambda_i=(0.1,), seed=seed)
    model = init_model(ranks, side, hp)
    data = SparseTensor.from_dense(rng.standard_normal(dims), rng.random(dims) < density)
    got = gradients(model, side, data, hp, backend=backend)
    if corrupt:
        got.d_core = got.d_core.copy()
        got.d_core.flat[0] += 1e-3 * (1.0 + abs(got.d_core.flat[0]))
    fd = oracle.finite_difference_gradients(model, side, data, hp)
    kr = oracle.kronecker_gradients(model, side, data, hp)
    fd_err = oracle.max_relative_error(got, fd)
    kr_err = oracle.max_abs_error(got, kr)
    ok = fd_err < fd_tol and kr_err < oracle_tol
    print(f"finite-difference max relative error: {fd_err:.3e} (threshold {fd_tol:g})")
    print(f"kronecker oracle max abs error:       {kr_err:.3e} (threshold {oracle_tol:g})")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_ingest_movielens(ratings: str, items: str | None, out: str, week_offset: int = 0) -> int:
    tensor, info = movielens_ingest(ratings, week_offset=week_offset)
    dest = Path(out)
    dest.mkdir(parents=True, exist_ok=True)
    save_tensor(tensor, dest / "tensor.txt")
    lines = [
        "tensor = tensor.txt",
        f"shape = {','.join(map(str, tensor.shape))}",
        f"side.0 = identity:{tensor.shape[0]}",
        f"side.2 = identity:{tensor.shape[2]}",
    ]
    if items:
        genres, labels = movielens_genres(items, info["items"])
        save_side_info(genres, dest / "genres.mtx")
        with open(dest / "labels.csv", "w", encoding="utf-8") as fh:
            for row, genre in labels:
                fh.write(f"{row},{genre}\n")
        lines.insert(3, "side.1 = genres.mtx")
        lines.append("labels = labels.csv")
    else:
        lines.insert(3, f"side.1 = identity:{tensor.shape[1]}")
    (dest / "movielens.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"shape={'x'.join(map(str, tensor.shape))} entries={tensor.nnz} -> {dest}")
    return EXIT_OK


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace("x", ",").split(",") if x)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamtucker", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("run", help="train/test runs over a growth plan"))
    _add_run_flags(sub.add_parser("cluster", help="nonnegative clustering with purity per step"))

    g = sub.add_parser("gradcheck", help="compare sparse gradients with dense oracles")
    g.add_argument("--dims", type=_ints, default=(4, 3, 3))
    g.add_argument("--ranks", type=_ints, default=(2, 2, 2))
    g.add_argument("--widths", type=_ints, default=None, help="side-information widths M_i")
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    g.add_argument("--backend", choices=("compiled", "python"), default=None)

    m = sub.add_parser("ingest-movielens", help="convert MovieLens 100K files")
    m.add_argument("--ratings", required=True, help="u.data")
    m.add_argument("--items", help="u.item (genre side information and labels)")
    m.add_argument("--out", required=True)
    m.add_argument("--week-offset", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(_resolve_config(args), backend=args.backend)
        if args.command == "cluster":
            return cmd_cluster(_resolve_config(args), backend=args.backend)
        if args.command == "gradcheck":
            return cmd_gradcheck(args.dims, args.ranks, args.seed, widths=args.widths,
                                 density=args.density, corrupt=args.corrupt, backend=args.backend)
        if args.command == "ingest-movielens":
            return cmd_ingest_movielens(args.ratings, args.items, args.out, args.week_offset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
