"""Run configuration, presets and the experiment drivers behind the CLI."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bath import BathSpec, build_bath
from .costmodel import (CostReport, model_weights, predicted_counts_dyson, predicted_counts_inch,
                        r_dyson, r_inch, r_time)
from .dyson import bare_dqmc, run_dyson
from .inchworm import run_inchworm
from .sampling import SamplingConfig, repetition_seeds
from .spinsys import SIGMA_X, SIGMA_Y, SIGMA_Z, ModelConfig

log = logging.getLogger(__name__)

SOLVERS = ("dyson", "inchworm", "bare-dqmc")
MODES = ("reuse", "no-reuse", "deterministic")
STEPPERS = ("heun", "euler")
OBSERVABLES = {"sigma_z": SIGMA_Z, "sigma_x": SIGMA_X, "sigma_y": SIGMA_Y}


class InvariantError(RuntimeError):
    """An invariant that must hold by construction was violated."""


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.  Nested groups mirror the JSON layout."""

    model: Dict = field(default_factory=lambda: {"epsilon": 1.0, "delta": 1.0, "observable": "sigma_z"})
    bath: Dict = field(default_factory=lambda: {"xi": 0.2, "omega_c": 2.5, "beta": 5.0,
                                                "omega_max": 10.0, "num_modes": 400})
    sampling: Dict = field(default_factory=lambda: {"B_emp": 0.1, "M_bar": 11, "M0_hat": 100,
                                                    "h": 0.05, "N": 40, "seed": 0})
    solver: str = "dyson"
    mode: str = "reuse"
    stepper: str = "heun"
    repetitions: int = 100
    ladder: List[int] = field(default_factory=lambda: [25, 100, 400])
    reference_M0: int = 10000
    h_ladder: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05])
    out_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stepper not in STEPPERS:
            raise ValueError(f"stepper must be one of {STEPPERS}")
        if self.model.get("observable", "sigma_z") not in OBSERVABLES:
            raise ValueError(f"observable must be one of {sorted(OBSERVABLES)}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        # constructing the components runs their own checks
        self.model_config()
        self.bath_spec()
        self.sampling_config()

    def model_config(self) -> ModelConfig:
        m = dict(self.model)
        obs = OBSERVABLES[m.pop("observable", "sigma_z")]
        return ModelConfig(epsilon=float(m.get("epsilon", 1.0)), delta=float(m.get("delta", 1.0)),
                           observable=obs)

    def bath_spec(self) -> BathSpec:
        return BathSpec(**self.bath)

    def sampling_config(self, **override) -> SamplingConfig:
        return SamplingConfig(**{**self.sampling, **override})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            cur = getattr(base, k)
            merged[k] = {**cur, **v} if isinstance(cur, dict) else v
        return replace(base, **merged)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def preset(name: str) -> RunConfig:
    """Named parameter sets for the observable experiment and the convergence study."""
    if name == "fig6-left":
        return RunConfig(bath={"xi": 0.2, "omega_c": 2.5, "beta": 5.0, "omega_max": 10.0, "num_modes": 400},
                         sampling={"B_emp": 0.1, "M_bar": 11, "M0_hat": 10000, "h": 0.05, "N": 40, "seed": 0})
    if name == "fig6-right":
        return RunConfig(bath={"xi": 0.4, "omega_c": 2.5, "beta": 5.0, "omega_max": 10.0, "num_modes": 400},
                         sampling={"B_emp": 0.2, "M_bar": 11, "M0_hat": 10000, "h": 0.05, "N": 40, "seed": 0})
    if name == "convergence":
        return RunConfig(bath={"xi": 0.1, "omega_c": 1.0, "beta": 0.2, "omega_max": 4.0, "num_modes": 400},
                         sampling={"B_emp": 0.3, "M_bar": 11, "M0_hat": 100, "h": 0.1, "N": 10, "seed": 0})
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("fig6-left", "fig6-right", "convergence")


# -- CSV ------------------------------------------------------------------------

def fmt(x) -> str:
    """17-significant-digit scientific formatting."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


# -- drivers --------------------------------------------------------------------

def solve(cfg: RunConfig, sampling: Optional[SamplingConfig] = None, mode: Optional[str] = None):
    """Run the configured solver; returns an object with ``times``, ``G``, ``cost`` and ``expectation()``."""
    model = cfg.model_config()
    bath = build_bath(cfg.bath_spec())
    sampling = sampling or cfg.sampling_config()
    mode = mode or cfg.mode
    if cfg.solver == "dyson":
        return run_dyson(model, bath, sampling, mode=mode, stepper=cfg.stepper)
    if cfg.solver == "inchworm":
        return run_inchworm(model, bath, sampling, mode=mode, stepper=cfg.stepper)
    return _bare_trajectory(model, bath, sampling)


@dataclass
class _BareResult:
    times: np.ndarray
    G: np.ndarray
    rho: np.ndarray
    cost: CostReport

    def expectation(self):
        return np.einsum("ij,nji->n", self.rho, self.G)


def _bare_trajectory(model, bath, sampling) -> _BareResult:
    N, h = sampling.N, sampling.h
    G = np.empty((N + 1, 2, 2), dtype=complex)
    G[0] = model.observable
    for n in range(1, N + 1):
        G[n] = bare_dqmc(model, bath, n * h, sampling.M0_hat, sampling.M_bar, sampling.B_emp,
                         seed=sampling.seed + n)
    return _BareResult(h * np.arange(N + 1), G, np.array(model.rho), CostReport(orders=()))


def observable_trajectory(cfg: RunConfig):
    """Rows ``(t_n, Re <O>, Im <O>)`` for ``n = 0..N`` and the solver result."""
    res = solve(cfg)
    ev = res.expectation()
    rows = [(t, v.real, v.imag) for t, v in zip(res.times, ev)]
    return rows, res


def frobenius_deviation(samples: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """``sqrt(mean_k ||G^[k]_n - ref_n||_F^2)`` for each step ``n``."""
    d = samples - reference[None]
    return np.sqrt(np.mean(np.sum(np.abs(d) ** 2, axis=(-2, -1)), axis=0))


def convergence_study(cfg: RunConfig, ladder: Optional[Sequence[int]] = None,
                      repetitions: Optional[int] = None, reference_M0: Optional[int] = None):
    """Sample standard deviation of ``G_{-n,n}`` against a large-sample reference.

    Returns ``(rows, slope)``: rows are ``(t_n, M0_hat, sigma)`` and ``slope``
    is the least-squares log-log slope of sigma versus ``M0_hat`` at the
    final time.
    """
    ladder = list(ladder or cfg.ladder)
    if len(ladder) < 3:
        raise ValueError("need at least three sample sizes")
    reps = repetitions or cfg.repetitions
    ref_M0 = reference_M0 or cfg.reference_M0
    base = cfg.sampling_config()
    ref = solve(cfg, replace(base, M0_hat=ref_M0, seed=base.seed + 1_000_003)).G
    rows, final = [], []
    for level, M0 in enumerate(ladder):
        seeds = repetition_seeds(base.seed, reps, level)
        runs = np.stack([solve(cfg, replace(base, M0_hat=M0, seed=s)).G for s in seeds])
        sig = frobenius_deviation(runs, ref)
        log.info("M0_hat=%d sigma(t_N)=%.3e", M0, sig[-1])
        rows.extend((n * base.h, M0, sig[n]) for n in range(base.N + 1))
        final.append(sig[-1])
    slope = float(np.polyfit(np.log(ladder), np.log(final), 1)[0])
    return rows, slope


def accuracy_study(cfg: RunConfig, h_ladder: Optional[Sequence[float]] = None):
    """Trajectories for each step size on a common end time.

    Returns ``(rows, diffs, order)``: rows ``(h, t_n, Re, Im)``; ``diffs`` the
    sup-norm differences between successive step sizes on their shared
    times; ``order`` the Richardson estimate ``log2(d1/d2)`` (``None`` with
    fewer than three step sizes).
    """
    hs = list(h_ladder or cfg.h_ladder)
    base = cfg.sampling_config()
    T = base.N * base.h
    trajs = []
    for h in hs:
        N = int(round(T / h))
        res = solve(cfg, replace(base, h=h, N=N))
        trajs.append((h, res.times, res.expectation()))
    rows = [(h, t, v.real, v.imag) for h, ts, ev in trajs for t, v in zip(ts, ev)]
    diffs = []
    for (h1, t1, e1), (h2, t2, e2) in zip(trajs, trajs[1:]):
        stride = int(round(h1 / h2))
        diffs.append(float(np.max(np.abs(e1 - e2[::stride][: e1.size]))))
    order = None
    if len(diffs) >= 2 and diffs[1] > 0:
        order = float(np.log2(diffs[0] / diffs[1]))
    return rows, diffs, order


def efficiency_report(cfg: RunConfig):
    """Run with and without reuse on the same seed and compare costs.

    Returns ``(cost_reuse, cost_noreuse, rows, header)``.  Raises
    :class:`InvariantError` if the two trajectories differ in any bit.
    """
    if cfg.solver not in ("dyson", "inchworm"):
        raise ValueError("efficiency report needs the dyson or inchworm solver")
    a = solve(cfg, mode="reuse")
    b = solve(cfg, mode="no-reuse")
    if not np.array_equal(a.G, b.G):
        raise InvariantError("reuse and no-reuse trajectories differ")
    s = cfg.sampling_config()
    orders = s.orders
    ratio = r_dyson if cfg.solver == "dyson" else r_inch
    weights_model = model_weights(orders, cfg.solver)
    measured = a.cost.mean_seconds()
    weights_meas = {m: (measured[m] if np.isfinite(measured[m]) else 0.0) for m in orders}
    header = (["n"] + [f"R^({m})" for m in orders]
              + ["R_T_model", "R_T_real", "R_T_counts"])
    rows = []
    for n in range(1, s.N + 1):
        if cfg.solver == "dyson":
            pc = {m: predicted_counts_dyson(s.M0_hat, s.B_emp, s.h, n, m) for m in orders}
        else:
            pc = {m: predicted_counts_inch(s.M0_hat, s.B_emp, s.h, n, m) for m in orders}
        rt_model = r_time(weights_model, {m: pc[m][0] for m in orders}, {m: pc[m][1] for m in orders})
        T_hat = a.cost.step_seconds[n - 1]
        T_full = b.cost.step_seconds[n - 1]
        rt_real = 1.0 - T_hat / T_full if T_full > 0 else 0.0
        rt_counts = r_time(weights_meas, a.cost.step_fresh[n - 1], a.cost.step_total[n - 1])
        rows.append([n] + [ratio(m, n) for m in orders] + [rt_model, rt_real, rt_counts])
    return a.cost, b.cost, rows, header


def ratio_curves(orders: Sequence[int], N: int, solver: str,
                 weights: Optional[Dict[int, float]] = None):
    """Closed-form ratio curves with the model time ratio: rows and header."""
    ratio = r_dyson if solver == "dyson" else r_inch
    w = weights or model_weights(orders, solver)
    header = ["n"] + [f"R^({m})" for m in orders] + ["R_T_model"]
    rows = []
    for n in range(1, N + 1):
        # with unit M0, h, B the count ratios depend only on the step structure
        if solver == "dyson":
            fresh = {m: n ** m for m in orders}
            total = {m: sum(i ** m for i in range(1, n + 1)) for m in orders}
        else:
            fresh = {m: (2 * n) ** m + (2 * n - 1) ** m - n ** m - (n - 1) ** m for m in orders}
            total = {m: sum(i ** m for i in range(n + 1, 2 * n + 1)) - sum(i ** m for i in range(1, n))
                     for m in orders}
        rows.append([n] + [ratio(m, n) for m in orders] + [r_time(w, fresh, total)])
    return rows, header
