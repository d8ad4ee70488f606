"""Experiment driver: converge, oracle-check, train, and scale commands.

Each command reads an optional JSON config file, lets command-line flags
override individual keys, and writes a CSV (to --out, or stdout). Outputs
are byte-identical across reruns with the same seed and config, except for
the leading ``#`` timestamp comment line.

Exit codes: 0 success, 1 a check or convergence failed, 2 bad configuration
or unparseable input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigurationError, DimensionError, IdxParseError, ProtocolError
from .multigrid import build_hierarchy, solve
from .network import sequential_forward, source_from_input
from .synthetic import random_network, random_sample
from .training import TrainConfig, evaluate, load_mnist_idx, train_epoch

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

_DEFAULTS = {
    "converge": {
        "depths": [64, 256, 1024],
        "width": 16,
        "horizon": 4.0,
        "coarsening": 4,
        "tol": 1e-9,
        "max_cycles": 50,
        "seed": 0,
        "workers": [1],
    },
    "oracle-check": {
        "num_seeds": 20,
        "seeds": None,
        "depths": [16, 64, 256],
        "widths": [2, 8],
        "horizon": 4.0,
        "coarsening": 4,
        "tol": 1e-9,
        "max_cycles": 50,
        "threshold": 1e-8,
        "seed": 0,
        "workers": [1],
    },
    "train": {
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "train_limit": 2000,
        "test_limit": 1000,
        "depth": 32,
        "width": 16,
        "horizon": 1.0,
        "coarsening": 4,
        "mode": "mg",
        "mg_cycles": 2,
        "learning_rate": 0.1,
        "batch_size": 16,
        "epochs": 1,
        "seed": 0,
    },
    "scale": {
        "depth": 1024,
        "width": 128,
        "horizon": 4.0,
        "coarsening": 4,
        "tol": 1e-9,
        "max_cycles": 50,
        "seed": 0,
        "workers": [1, 2, 4, 8],
    },
}


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma-separated integer list, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layermg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("converge", "oracle-check", "train", "scale"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="JSON config file; flags override its keys")
        cmd.add_argument("--out", help="CSV output path (default: stdout)")
        cmd.add_argument("--seed", type=int, help="base seed")
        cmd.add_argument("--workers", help="comma-separated worker counts")
        cmd.add_argument("--depths", help="comma-separated layer counts")
        cmd.add_argument("--cycles", type=int, help="cycle budget (mg_cycles for train)")
        cmd.add_argument("--tol", type=float, help="residual tolerance")
    return parser


def _load_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS[command])
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{args.config}: config must be a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigurationError(f"{args.config}: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    overrides = [
        ("--seed", "seed", args.seed),
        ("--workers", "workers", _parse_int_list(args.workers) if args.workers is not None else None),
        ("--depths", "depths", _parse_int_list(args.depths) if args.depths is not None else None),
        ("--tol", "tol", args.tol),
        ("--cycles", "mg_cycles" if command == "train" else "max_cycles", args.cycles),
    ]
    for flag, key, value in overrides:
        if value is None:
            continue
        if key not in cfg:
            raise ConfigurationError(f"{flag} does not apply to {command!r}")
        cfg[key] = value
    return cfg


def _write_rows(out_path: str | None, header: list[str], rows: list[list]) -> None:
    lines = [f"# generated {datetime.now(timezone.utc).isoformat()}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _experiment_net(depth: int, width: int, seed: int, horizon: float):
    net = random_network(depth, width, [seed, depth, width], horizon=horizon)
    sample = random_sample(width, [seed, depth, width])
    return net, source_from_input(net, sample)


def _cmd_converge(cfg: dict, out: str | None) -> int:
    workers = cfg["workers"][0] if cfg["workers"] else 1
    rows, ok = [], True
    for depth in cfg["depths"]:
        net, source = _experiment_net(depth, cfg["width"], cfg["seed"], cfg["horizon"])
        hierarchy = build_hierarchy(net, cfg["coarsening"])
        _, report = solve(hierarchy, source, cfg["tol"], cfg["max_cycles"], workers=workers)
        ok = ok and report.converged
        for cycle, norm in enumerate(report.residual_norms):
            rows.append([depth, cycle, norm])
        print(
            f"depth {depth}: cycles={report.cycles_used} converged={report.converged} "
            f"final_residual={report.residual_norms[-1]:.3e}",
            file=sys.stderr,
        )
    _write_rows(out, ["depth", "cycle", "residual_l2"], rows)
    return EXIT_OK if ok else EXIT_FAILURE


def _cmd_oracle_check(cfg: dict, out: str | None) -> int:
    seeds = cfg["seeds"] if cfg["seeds"] is not None else list(range(cfg["num_seeds"]))
    workers = cfg["workers"][0] if cfg["workers"] else 1
    rows, failures = [], []
    for seed in seeds:
        for depth in cfg["depths"]:
            for width in cfg["widths"]:
                net, source = _experiment_net(depth, width, seed, cfg["horizon"])
                hierarchy = build_hierarchy(net, cfg["coarsening"])
                states, report = solve(
                    hierarchy, source, cfg["tol"], cfg["max_cycles"], workers=workers
                )
                oracle = sequential_forward(net, source)
                err = float(np.max(np.abs(states - oracle)))
                passed = report.converged and err <= cfg["threshold"]
                rows.append([seed, depth, width, err, int(passed)])
                if not passed:
                    failures.append((seed, depth, width, err, report.converged))
    _write_rows(out, ["seed", "depth", "width", "max_abs_error", "passed"], rows)
    if failures:
        for seed, depth, width, err, converged in failures:
            print(
                f"FAIL seed={seed} depth={depth} width={width} "
                f"max_abs_error={err:.3e} converged={converged}",
                file=sys.stderr,
            )
        return EXIT_FAILURE
    print(f"oracle-check: all {len(rows)} runs within {cfg['threshold']}", file=sys.stderr)
    return EXIT_OK


def _cmd_train(cfg: dict, out: str | None) -> int:
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        if not cfg[key]:
            raise ConfigurationError(f"train config needs {key}")
    train_data = load_mnist_idx(cfg["train_images"], cfg["train_labels"]).subset(cfg["train_limit"])
    test_data = load_mnist_idx(cfg["test_images"], cfg["test_labels"]).subset(cfg["test_limit"])
    net = random_network(
        cfg["depth"],
        cfg["width"],
        cfg["seed"],
        horizon=cfg["horizon"],
        input_dim=train_data.images[0].size,
    )
    train_cfg = TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        mode=cfg["mode"],
        mg_cycles=cfg["mg_cycles"],
        coarsening=cfg["coarsening"],
        seed=cfg["seed"],
    )
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for epoch in range(1, train_cfg.epochs + 1):
        stats = train_epoch(net, train_data, train_cfg, rng=rng)
        test_error = evaluate(net, test_data)
        rows.append([epoch, stats.mean_loss, test_error, train_cfg.mode, train_cfg.mg_cycles])
        print(
            f"epoch {epoch}: mean_loss={stats.mean_loss:.4f} "
            f"train_error={stats.top1_error:.4f} test_error={test_error:.4f}",
            file=sys.stderr,
        )
    _write_rows(out, ["epoch", "mean_loss", "top1_error", "mode", "mg_cycles"], rows)
    return EXIT_OK


def _cmd_scale(cfg: dict, out: str | None) -> int:
    net, source = _experiment_net(cfg["depth"], cfg["width"], cfg["seed"], cfg["horizon"])
    hierarchy = build_hierarchy(net, cfg["coarsening"])
    rows, checksums = [], []
    for workers in cfg["workers"]:
        start = time.perf_counter()
        states, report = solve(hierarchy, source, cfg["tol"], cfg["max_cycles"], workers=workers)
        elapsed = time.perf_counter() - start
        digest = hashlib.sha256(states.tobytes()).hexdigest()
        checksums.append(digest)
        rows.append([workers, elapsed, digest])
        print(
            f"workers {workers}: {elapsed:.3f}s cycles={report.cycles_used} "
            f"checksum={digest[:12]}",
            file=sys.stderr,
        )
    _write_rows(out, ["workers", "wall_seconds", "checksum"], rows)
    if len(set(checksums)) > 1:
        print("scale: checksum divergence across worker counts", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


_COMMANDS = {
    "converge": _cmd_converge,
    "oracle-check": _cmd_oracle_check,
    "train": _cmd_train,
    "scale": _cmd_scale,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.command, args)
        return _COMMANDS[args.command](cfg, args.out)
    except (ConfigurationError, DimensionError, IdxParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
