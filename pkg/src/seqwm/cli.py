"""Command-line front end.

Exit status: 0 success / watermark detected, 3 not detected, 1 usage or
contract error, 2 I/O error.  Summaries go to stderr; artifacts go to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import analysis, attacks, calibration, encoder, plotting, trajectory_io
from .keyed_subset import SecretKey
from .policy import PolicySpec, make_rng
from .records import MODE_PER_STEP

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NOT_DETECTED = 3

DEFAULTS = {"w": 3, "m": 8, "n": 3, "n_min": 2, "gamma": 2.0, "delta": 0.2}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _method(text: str) -> str:
    return text.replace("-", "_")


def _read_json(path: str) -> dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON config ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return raw


def _params(args: argparse.Namespace, base: dict[str, Any], key: SecretKey | None = None) -> encoder.WatermarkParams:
    values = {**DEFAULTS, **{k: v for k, v in base.items() if k in DEFAULTS}}
    for name in DEFAULTS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return encoder.WatermarkParams(
        w=int(values["w"]), m=int(values["m"]), n=int(values["n"]), n_min=int(values["n_min"]),
        gamma=float(values["gamma"]), delta=float(values["delta"]), key=key,
    )


def _seed(args: argparse.Namespace, cfg: dict[str, Any]) -> int | None:
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.get("seed")
    if seed is None and args.ci:
        raise UsageError("--seed (or a config seed) is required in CI mode")
    return seed


def _generate(args: argparse.Namespace, method: str, key: SecretKey | None) -> int:
    cfg = _read_json(args.config)
    if "policy" not in cfg:
        raise UsageError("config needs a 'policy' section")
    policy = PolicySpec.from_dict(cfg["policy"])
    params = _params(args, cfg.get("watermark", {}), key)
    T = args.T if args.T is not None else int(cfg.get("T", 103))
    seed = _seed(args, cfg)
    rng = make_rng(seed) if seed is not None else np.random.default_rng()
    traj = encoder.encode_trajectory(params, policy, T, rng, method=method)
    traj.seed = seed
    trajectory_io.save(traj, args.out)
    marked = sum(s.watermarked for s in traj.steps)
    print(f"wrote {args.out}: T={T} method={method} watermarked_steps={marked}", file=sys.stderr)
    return EXIT_OK


def cmd_keygen(args: argparse.Namespace) -> int:
    if args.seed is None and args.ci:
        raise UsageError("--seed is required in CI mode")
    rng = make_rng(args.seed) if args.seed is not None else None
    trajectory_io.keygen(args.out, rng)
    print(f"wrote key to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    return _generate(args, "none", None)


def cmd_embed(args: argparse.Namespace) -> int:
    key = trajectory_io.load_key(args.key)
    cfg_method = _read_json(args.config).get("method", "seqwm")
    method = _method(args.method or cfg_method)
    if method not in ("seqwm", "round_indexed"):
        raise UsageError(f"unknown embedding method {method!r}")
    return _generate(args, method, key)


def cmd_detect(args: argparse.Namespace) -> int:
    key = trajectory_io.load_key(args.key)
    obs, traj = trajectory_io.load(args.traj)
    method = _method(args.method or (traj.method if traj.method in ("seqwm", "round_indexed") else "seqwm"))
    params = _params(args, traj.params)
    seed = args.seed
    if seed is None and args.ci:
        raise UsageError("--seed is required in CI mode")
    rng = make_rng(seed) if seed is not None else np.random.default_rng()
    report = calibration.calibrate(key, obs, params, M=args.M, alpha=args.alpha, rng=rng,
                                   method=method, jobs=args.jobs)
    if args.out:
        trajectory_io.save_report(report, args.out)
    if args.figure:
        plotting.null_histogram(report.null_scores, report.s_true, report.p_value, args.figure)
    z = "n/a" if report.z_reference is None else f"{report.z_reference:.2f}"
    print(f"S_true={report.s_true} p={report.p_value:.4g} z_ref={z} "
          f"{'DETECTED' if report.decision else 'not detected'} (alpha={args.alpha}, M={args.M})",
          file=sys.stderr)
    return EXIT_OK if report.decision else EXIT_NOT_DETECTED


def cmd_attack(args: argparse.Namespace) -> int:
    obs, traj = trajectory_io.load(args.traj)
    if args.type == "truncate":
        if args.keep is None:
            raise UsageError("truncate needs --keep")
        spec = attacks.AttackSpec("truncate", keep=args.keep, seed=args.seed or 0)
    else:
        if args.rho is None:
            raise UsageError(f"{args.type} needs --rho")
        if args.seed is None and args.ci:
            raise UsageError("--seed is required in CI mode")
        spec = attacks.AttackSpec(args.type, rho=args.rho, seed=args.seed if args.seed is not None else 0)
    if spec.type == "substitute" and obs.mode == MODE_PER_STEP:
        raise UsageError("substitution needs a global-vocabulary trajectory")
    attacked = spec.apply(obs)
    out = trajectory_io.observed_to_trajectory(attacked, traj)
    trajectory_io.save(out, args.out)
    print(f"wrote {args.out}: {len(obs)} -> {len(attacked)} steps ({spec.to_dict()})", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _read_json(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif "seed" not in cfg and args.ci:
        raise UsageError("--seed (or a config seed) is required in CI mode")
    rows = analysis.run_sweep(cfg, jobs=args.jobs)
    Path(args.out).write_text(analysis.rows_to_csv(rows), encoding="utf-8")
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    if not args.no_figures:
        for path in plotting.sweep_figures(rows, args.out):
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    pred = analysis.power_prediction(args.T, args.w, args.m, args.gamma, args.p0, d=args.d)
    print(json.dumps(pred.to_dict(), indent=2))
    return EXIT_OK


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w", type=int, help="window length")
    p.add_argument("--m", type=int, help="channel count")
    p.add_argument("--n", type=int, help="guided subset size")
    p.add_argument("--n-min", dest="n_min", type=int, help="minimum subset size after clipping")
    p.add_argument("--gamma", type=float, help="bias strength")
    p.add_argument("--delta", type=float, help="probability floor")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqwm", description="Sequential behavioral watermarking for action trajectories.")
    parser.add_argument("--ci", action="store_true", help="require explicit seeds everywhere")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="write a fresh secret key")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="derive the key from a seeded RNG (testing only)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("simulate", help="generate an unwatermarked trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed", help="generate a watermarked trajectory")
    p.add_argument("--key", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["seqwm", "round-indexed"])
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    _add_param_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="random-key calibrated detection")
    p.add_argument("--key", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out")
    p.add_argument("--method", choices=["seqwm", "round-indexed"])
    p.add_argument("--seed", type=int, help="seed for the wrong-key draws")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--figure", help="also render the null histogram to this PNG")
    _add_param_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("attack", help="corrupt a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--type", required=True, choices=list(attacks.ATTACK_TYPES))
    p.add_argument("--rho", type=float)
    p.add_argument("--keep", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="run a Monte Carlo grid and write CSV (+ figures)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="print closed-form predictions as JSON")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--w", type=int, default=3)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--p0", type=float, required=True)
    p.add_argument("--d", type=int, default=0, help="number of deletions for the deletion terms")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "M", 1) < 1 or not 0 < getattr(args, "alpha", 0.5) < 1:
        parser.error("need M >= 1 and 0 < alpha < 1")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"seqwm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError) as exc:
        print(f"seqwm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
