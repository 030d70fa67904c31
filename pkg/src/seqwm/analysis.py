"""Closed-form predictions and the Monte Carlo sweep harness.

The formulas are first-order expansions around ``gamma = 0`` for a uniform
elicited distribution; the sweep measures the real thing on synthetic
policies so the two can be compared.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .attacks import delete_random
from .calibration import draw_wrong_keys, p_value
from .detector import UndefinedSignalError, pack
from .encoder import WatermarkParams, encode_trajectory
from .keyed_subset import KEY_BYTES, SecretKey
from .policy import ActionVocabulary, PolicySpec, make_rng, random_transition_matrix


class ConfigError(ValueError):
    pass


def predict_p1(p0: float, gamma: float, m: int) -> float:
    """Single-channel hit probability under the tilt, to first order in gamma."""
    _check_p0(p0)
    return p0 + (gamma / m) * p0 * (1 - p0)


def predict_snr(T: int, w: int, m: int, gamma: float, p0: float) -> float:
    if T <= w:
        raise UndefinedSignalError("SNR needs T > w")
    _check_p0(p0)
    return math.sqrt((T - w) / m) * gamma * math.sqrt(p0 * (1 - p0))


def predict_kl(gamma: float, m: int, p0: float) -> float:
    """Per-step KL(P_wm || P) in nats, to second order in gamma."""
    _check_p0(p0)
    return gamma ** 2 * p0 * (1 - p0) / (2 * m)


def predict_mean_shift(T: int, w: int, gamma: float, p0: float) -> float:
    """Expected excess of the true-key sliding score over its null mean."""
    if T <= w:
        raise UndefinedSignalError("mean shift needs T > w")
    _check_p0(p0)
    return (T - w) * gamma * p0 * (1 - p0)


def deletion_bound(d: int, w: int, m: int) -> int:
    """Most clean sliding-window indicators that ``d`` deletions can invalidate."""
    if min(d, w, m) < 0:
        raise ValueError("inputs must be non-negative")
    return d * (w + 1) * m


def expected_aligned_prefix(T: int, d: int) -> float:
    """Expected number of positions before the first of ``d`` uniform deletions."""
    if not 0 <= d <= T:
        raise ValueError("need 0 <= d <= T")
    return (T - d) / (d + 1)


def _check_p0(p0: float) -> None:
    if not 0 < p0 < 1:
        raise ValueError("p0 must lie in (0, 1)")


@dataclass(frozen=True)
class PowerPrediction:
    p0: float
    p1: float
    snr: float
    kl_per_step: float
    mean_shift: float
    deletion_bound: int
    expected_aligned_prefix: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def power_prediction(T: int, w: int, m: int, gamma: float, p0: float, d: int = 0) -> PowerPrediction:
    return PowerPrediction(
        p0=p0,
        p1=predict_p1(p0, gamma, m),
        snr=predict_snr(T, w, m, gamma, p0),
        kl_per_step=predict_kl(gamma, m, p0),
        mean_shift=predict_mean_shift(T, w, gamma, p0),
        deletion_bound=deletion_bound(d, w, m),
        expected_aligned_prefix=expected_aligned_prefix(T, d),
    )


def exact_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def first_deletion_prefix(T: int, d: int, rng: np.random.Generator, trials: int) -> np.ndarray:
    """Samples of ``k* - 1`` (positions before the first deletion) under uniform deletion."""
    if d == 0:
        return np.full(trials, T)
    return np.array([int(rng.choice(T, size=d, replace=False).min()) for _ in range(trials)])


# --- sweep harness ---------------------------------------------------------

SWEEP_METHODS = ("seqwm", "round_indexed", "unwatermarked")
ALPHAS = (0.01, 0.05)
CSV_HEADER = (
    "method", "gamma", "rho", "m", "trials", "M", "mean_z", "tpr_0.01", "tpr_0.05",
    "fpr_0.01", "fpr_0.05", "mean_p", "mean_hit_rate", "runtime_s",
)


@dataclass
class SweepConfig:
    """One JSON document describing a sweep grid.

    ``profile`` fixes the synthetic policy: ``A`` (vocabulary size), ``T``,
    ``n``, ``n_min``, ``w``, ``delta``, ``policy`` (``uniform`` or
    ``markov_order1`` with ``transition_concentration``).
    """

    gamma: list[float] = field(default_factory=lambda: [2.0])
    rho: list[float] = field(default_factory=lambda: [0.0])
    m: list[int] = field(default_factory=lambda: [8])
    method: list[str] = field(default_factory=lambda: ["seqwm"])
    trials: int = 100
    null_trials: int | None = None
    M: int = 200
    seed: int = 0
    profile: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("gamma", "rho", "m", "method"):
            values = getattr(self, name)
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep axis {name!r} must be a non-empty list")
        bad = [m for m in self.method if m not in SWEEP_METHODS]
        if bad:
            raise ConfigError(f"unknown sweep methods {bad}")
        if any(g < 0 for g in self.gamma):
            raise ConfigError("gamma values must be non-negative")
        if any(not 0 <= r < 1 for r in self.rho):
            raise ConfigError("rho values must lie in [0, 1)")
        if any(m < 1 for m in self.m):
            raise ConfigError("m values must be >= 1")
        if self.trials < 1 or self.M < 1:
            raise ConfigError("trials and M must be >= 1")
        known = {"A", "T", "n", "n_min", "w", "delta", "policy", "transition_concentration"}
        extra = set(self.profile) - known
        if extra:
            raise ConfigError(f"unknown profile keys {sorted(extra)}")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> SweepConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown sweep config keys {sorted(extra)}")
        return cls(**raw)

    def prof(self, name: str, default: Any) -> Any:
        return self.profile.get(name, default)

    def cells(self) -> list[tuple[str, float, float, int]]:
        return [(method, g, r, m) for method in self.method for g in self.gamma
                for r in self.rho for m in self.m]


def _policy(cfg: SweepConfig) -> PolicySpec:
    vocab = ActionVocabulary.numbered(int(cfg.prof("A", 10)))
    kind = cfg.prof("policy", "uniform")
    if kind == "markov_order1":
        mat = random_transition_matrix(len(vocab), float(cfg.prof("transition_concentration", 1.0)), cfg.seed)
        return PolicySpec("markov_order1", vocab, transition_matrix=mat, rng_seed=cfg.seed)
    return PolicySpec(kind, vocab, rng_seed=cfg.seed)


def _detect_many(key: SecretKey, obs, params: WatermarkParams, method: str, M: int,
                 rng: np.random.Generator) -> tuple[float, float, float]:
    """(p-value, reference z, hit rate) for one observation."""
    packed = pack(obs, params, method)
    wrong = draw_wrong_keys(rng, M, exclude=key)
    scores = packed.scores([key.data] + [k.data for k in wrong])
    s_true = int(scores[0])
    p = p_value(s_true, scores[1:])
    n = len(packed)
    if n == 0:
        return p, float("nan"), float("nan")
    rates = packed.n_effs / packed.sizes
    var = float(np.sum(rates * (1 - rates)))
    z = (s_true - float(rates.sum())) / math.sqrt(var)
    return p, z, s_true / n


def run_cell(cfg: SweepConfig, method: str, gamma: float, rho: float, m: int,
             cell_seed: Sequence[int]) -> dict[str, Any]:
    started = time.perf_counter()
    policy = _policy(cfg)
    params = WatermarkParams(
        w=int(cfg.prof("w", 3)), m=m, n=int(cfg.prof("n", 3)), n_min=int(cfg.prof("n_min", 2)),
        gamma=gamma, delta=float(cfg.prof("delta", 0.2)),
    )
    T = int(cfg.prof("T", 103))
    detector = "round_indexed" if method == "round_indexed" else "seqwm"
    encoder = {"seqwm": "seqwm", "round_indexed": "round_indexed", "unwatermarked": "none"}[method]
    rng = make_rng(list(cell_seed))

    def one(watermark: bool) -> tuple[float, float, float]:
        key = SecretKey(rng.bytes(KEY_BYTES))
        traj = encode_trajectory(params.with_key(key), policy, T, rng, method=encoder if watermark else "none")
        obs = traj.observed()
        if rho > 0:
            obs, _ = delete_random(obs, rho, rng)
        return _detect_many(key, obs, params, detector, cfg.M, rng)

    alt = np.array([one(True) for _ in range(cfg.trials)])
    null = np.array([one(False) for _ in range(cfg.null_trials or cfg.trials)])
    row: dict[str, Any] = {
        "method": method, "gamma": gamma, "rho": rho, "m": m, "trials": cfg.trials, "M": cfg.M,
        "mean_z": float(np.nanmean(alt[:, 1])),
    }
    for a in ALPHAS:
        row[f"tpr_{a}"] = float(np.mean(alt[:, 0] < a))
    for a in ALPHAS:
        row[f"fpr_{a}"] = float(np.mean(null[:, 0] < a))
    row["mean_p"] = float(np.mean(alt[:, 0]))
    row["mean_hit_rate"] = float(np.nanmean(alt[:, 2]))
    row["runtime_s"] = time.perf_counter() - started
    return row


def _cell_job(args):
    cfg, index, cell = args
    method, gamma, rho, m = cell
    return run_cell(cfg, method, gamma, rho, m, (cfg.seed, index))


def run_sweep(config: SweepConfig | dict[str, Any], jobs: int = 1) -> list[dict[str, Any]]:
    """Evaluate every grid cell; rows come back in grid order.

    Each cell draws from its own generator seeded by ``(seed, cell index)``,
    so the table is identical for any ``jobs``.
    """
    cfg = config if isinstance(config, SweepConfig) else SweepConfig.from_dict(config)
    work = [(cfg, i, cell) for i, cell in enumerate(cfg.cells())]
    if jobs <= 1:
        return [_cell_job(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell_job, work))


def rows_to_csv(rows: Iterable[dict[str, Any]], include_runtime: bool = True) -> str:
    header = [h for h in CSV_HEADER if include_runtime or h != "runtime_s"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
