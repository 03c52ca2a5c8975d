"""Command-line runner: ``python -m fastbath <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .experiments import (PRESETS, InvariantError, RunConfig, accuracy_study, convergence_study,
                          efficiency_report, observable_trajectory, preset, ratio_curves, to_csv)

log = logging.getLogger("fastbath")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", choices=PRESETS, help="start from a named parameter set")
    common.add_argument("--seed", type=int)
    common.add_argument("--solver", choices=("dyson", "inchworm", "bare-dqmc"))
    common.add_argument("--mode", choices=("reuse", "no-reuse", "deterministic"))
    common.add_argument("--stepper", choices=("heun", "euler"))
    common.add_argument("--steps", type=int, help="number of time steps N")
    common.add_argument("--h", type=float, help="time step")
    common.add_argument("--m0", type=int, help="initial sample count")
    common.add_argument("--m-bar", type=int, help="truncation order (odd)")
    common.add_argument("--out-dir")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fastbath", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="observable trajectory CSV")
    acc = sub.add_parser("accuracy", parents=[common], help="step-size refinement study")
    acc.add_argument("--h-ladder", type=float, nargs="+")
    conv = sub.add_parser("convergence", parents=[common], help="Monte Carlo convergence study")
    conv.add_argument("--ladder", type=int, nargs="+")
    conv.add_argument("--repetitions", type=int)
    conv.add_argument("--reference-m0", type=int)
    sub.add_parser("efficiency", parents=[common], help="reuse versus no-reuse cost report")
    rat = sub.add_parser("ratios", parents=[common], help="closed-form saving ratios")
    rat.add_argument("--weights", help="JSON map from order m to per-evaluation seconds")
    return p


def build_config(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        data = json.loads(Path(args.config).read_text())
        cfg = RunConfig.from_dict({**json.loads(cfg.to_json()), **data})
    sampling = dict(cfg.sampling)
    for key, val in (("seed", args.seed), ("N", args.steps), ("h", args.h), ("M0_hat", args.m0),
                     ("M_bar", args.m_bar)):
        if val is not None:
            sampling[key] = val
    changes = {"sampling": sampling}
    for key in ("solver", "mode", "stepper"):
        if getattr(args, key) is not None:
            changes[key] = getattr(args, key)
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    for key, attr in (("ladder", "ladder"), ("repetitions", "repetitions"),
                      ("reference_M0", "reference_m0"), ("h_ladder", "h_ladder")):
        if getattr(args, attr, None) is not None:
            changes[key] = getattr(args, attr)
    return replace(cfg, **changes)


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    try:
        if args.command == "simulate":
            rows, res = observable_trajectory(cfg)
            _write(out, "trajectory.csv", to_csv(["t", "re", "im"], rows))
            if res.cost.orders:
                _write(out, "cost.json", res.cost.to_json())
            if cfg.solver == "dyson" and cfg.mode != "deterministic":
                herm = float(np.max(np.abs(res.G - np.conj(np.swapaxes(res.G, -1, -2)))))
                if herm > 1e-12:
                    raise InvariantError(f"trajectory is not Hermitian ({herm:.2e})")
        elif args.command == "accuracy":
            rows, diffs, order = accuracy_study(cfg)
            _write(out, "accuracy.csv", to_csv(["h", "t", "re", "im"], rows))
            _write(out, "accuracy_summary.json", json.dumps({"sup_diffs": diffs, "order": order}, indent=2))
        elif args.command == "convergence":
            rows, slope = convergence_study(cfg)
            _write(out, "convergence.csv", to_csv(["t", "M0_hat", "sigma"], rows))
            _write(out, "convergence_summary.json", json.dumps({"slope": slope}, indent=2))
        elif args.command == "efficiency":
            cost_a, cost_b, rows, header = efficiency_report(cfg)
            _write(out, "cost_reuse.json", cost_a.to_json())
            _write(out, "cost_noreuse.json", cost_b.to_json())
            _write(out, "ratios.csv", to_csv(header, rows))
        elif args.command == "ratios":
            s = cfg.sampling_config()
            weights = None
            if args.weights:
                try:
                    weights = {int(k): float(v) for k, v in json.loads(args.weights).items()}
                except (ValueError, AttributeError) as exc:
                    print(f"configuration error: bad --weights ({exc})", file=sys.stderr)
                    return 2
                if set(weights) != set(s.orders):
                    print(f"configuration error: --weights must cover orders {list(s.orders)}", file=sys.stderr)
                    return 2
            solver = "inchworm" if cfg.solver == "inchworm" else "dyson"
            rows, header = ratio_curves(s.orders, s.N, solver, weights)
            _write(out, "ratios.csv", to_csv(header, rows))
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
