"""Federated averaging over household client groups.

Each client fits a linear model (bias last) by mini-batch gradient descent
on its own rows; the server only ever sees ``ModelState`` objects and
combines them weighted by sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .grid import MONTHS, MeterReading, Scenario, wh_to_kwh

# The lag feature enters the design matrix in units of this many kWh; sized
# so the default learning rate is stable for each quantity.
LAG_SCALE_KWH = {"consumed": 100.0, "produced": 2000.0}
N_FEATURES = 3  # sin, cos, lag


class FedLearnError(ValueError):
    pass


class EmptyDatasetError(FedLearnError):
    pass


class AggregationError(FedLearnError):
    pass


class NonFiniteWeightsError(FedLearnError):
    pass


@dataclass(frozen=True, eq=False)
class ModelState:
    weights: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise NonFiniteWeightsError(f"non-finite weights: {w}")
        if self.sample_count < 0:
            raise FedLearnError("sample_count must be >= 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "ModelState":
        return cls(np.zeros(dim), 0)

    def to_dict(self) -> dict:
        return {"weights": [float(v) for v in self.weights], "sample_count": self.sample_count}


@dataclass(frozen=True)
class FedConfig:
    total_clients: int = 4
    participation_rate: float = 1.0
    rounds: int = 50
    local_epochs: int = 1
    batch_size: int = 8192  # one batch per default client
    learning_rate: float = 0.05
    round_delay: float = 1.0
    server_time_per_round: float = 2.0
    local_time_per_batch: float = 0.01

    def __post_init__(self):
        if self.total_clients < 1:
            raise FedLearnError("total_clients must be >= 1")
        if not 0.0 <= self.participation_rate <= 1.0:
            raise FedLearnError("participation_rate must be in [0, 1]")
        if self.rounds < 1:
            raise FedLearnError("rounds must be >= 1")
        if self.local_epochs < 1:
            raise FedLearnError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise FedLearnError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise FedLearnError("learning_rate must be > 0")
        if min(self.round_delay, self.server_time_per_round, self.local_time_per_batch) < 0:
            raise FedLearnError("timing parameters must be >= 0")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "FedConfig":
        known = cls.__dataclass_fields__
        unknown = set(raw) - set(known)
        if unknown:
            raise FedLearnError(f"unknown fed config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True, eq=False)
class ClientDataset:
    """Feature rows ``x`` (n, F-1) without the bias column, targets ``y`` in kWh."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise FedLearnError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FedLearnError("dataset contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        """Model dimension F, bias included."""
        return self.x.shape[1] + 1

    def design(self) -> np.ndarray:
        return np.hstack([self.x, np.ones((len(self), 1))])

    @staticmethod
    def pool(datasets: Sequence["ClientDataset"]) -> "ClientDataset":
        return ClientDataset(
            np.vstack([d.x for d in datasets]), np.concatenate([d.y for d in datasets])
        )


@dataclass(frozen=True)
class RoundTiming:
    t_local: float
    t_g: float
    round_delay: float

    @property
    def t_global(self) -> float:
        return global_round_time(self.round_delay, self.t_g, self.t_local)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected_clients: tuple[int, ...]
    global_loss: float | None
    t_global_seconds: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "selected_clients": list(self.selected_clients),
            "global_loss": self.global_loss,
            "t_global_seconds": self.t_global_seconds,
        }


@dataclass
class FedRun:
    model: ModelState
    timings: list[RoundTiming] = field(default_factory=list)
    history: list[RoundRecord] = field(default_factory=list)


def mse_gradient(weights: np.ndarray, design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of mean((Xw - y)^2) with respect to w."""
    residual = design @ weights - y
    return (2.0 / y.shape[0]) * (design.T @ residual)


def mse(weights: np.ndarray, design: np.ndarray, y: np.ndarray) -> float:
    # a diverging model should report inf, not warn
    with np.errstate(over="ignore", invalid="ignore"):
        residual = design @ weights - y
        return float(np.mean(residual * residual))


def n_batches(n_rows: int, batch_size: int) -> int:
    return -(-n_rows // batch_size)


def client_update(start: ModelState, data: ClientDataset, cfg: FedConfig) -> ModelState:
    """Run ``cfg.local_epochs`` passes of mini-batch GD starting from ``start``.

    Batches are contiguous slices of at most ``batch_size`` rows in dataset
    order; the last one may be short.
    """
    n = len(data)
    if n == 0:
        raise EmptyDatasetError("client has no data")
    if start.dim != data.dim:
        raise FedLearnError(f"model dimension {start.dim} != data dimension {data.dim}")
    design = data.design()
    w = start.weights.copy()
    for _ in range(cfg.local_epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, n, cfg.batch_size):
                hi = lo + cfg.batch_size
                w -= cfg.learning_rate * mse_gradient(w, design[lo:hi], data.y[lo:hi])
        if not np.all(np.isfinite(w)):
            raise NonFiniteWeightsError(
                f"local training diverged (learning_rate={cfg.learning_rate})"
            )
    return ModelState(w, n)


def participants(total_clients: int, participation_rate: float) -> int:
    # rounding guards against 0.3 * 10 == 3.0000000000000004
    return max(math.ceil(round(participation_rate * total_clients, 9)), 1)


def select_clients(
    total_clients: int, participation_rate: float, rng: np.random.Generator
) -> list[int]:
    if total_clients < 1:
        raise FedLearnError("total_clients must be >= 1")
    if not 0.0 <= participation_rate <= 1.0:
        raise FedLearnError("participation_rate must be in [0, 1]")
    m = participants(total_clients, participation_rate)
    return sorted(int(k) for k in rng.choice(total_clients, size=m, replace=False))


def aggregate(updates: Sequence[ModelState]) -> ModelState:
    if not updates:
        raise AggregationError("nothing to aggregate")
    dims = {u.dim for u in updates}
    if len(dims) != 1:
        raise AggregationError(f"mismatched model dimensions {sorted(dims)}")
    total = sum(u.sample_count for u in updates)
    if total <= 0:
        raise AggregationError("total sample count is zero")
    w = np.zeros(updates[0].dim)
    for u in updates:
        w += (u.sample_count / total) * u.weights
    return ModelState(w, total)


def global_round_time(round_delay: float, t_g: float, t_local: float) -> float:
    return round_delay * t_g + t_local


class Client:
    """Holds one client's rows; only model states go in and out."""

    def __init__(self, client_id: int, data: ClientDataset):
        if len(data) == 0:
            raise EmptyDatasetError(f"client {client_id} has no data")
        self.client_id = client_id
        self._data = data

    def update(self, state: ModelState, cfg: FedConfig) -> ModelState:
        return client_update(state, self._data, cfg)

    def local_seconds(self, cfg: FedConfig) -> float:
        return cfg.local_epochs * n_batches(len(self._data), cfg.batch_size) * cfg.local_time_per_batch


Observer = Callable[[str, int, object], None]


def run_rounds(
    cfg: FedConfig,
    datasets: Sequence[ClientDataset],
    rng: np.random.Generator,
    *,
    evaluate: Callable[[ModelState], float] | None = None,
    observer: Observer | None = None,
) -> FedRun:
    """Server loop: start from zero weights, sample, broadcast, train, average.

    ``observer(direction, client_id, message)`` sees every message crossing
    the client/server boundary ("down" for broadcasts, "up" for updates).
    ``evaluate`` is an out-of-band harness hook used only for the loss trace.
    """
    if len(datasets) != cfg.total_clients:
        raise FedLearnError(f"expected {cfg.total_clients} datasets, got {len(datasets)}")
    clients = [Client(j, d) for j, d in enumerate(datasets)]
    dims = {d.dim for d in datasets}
    if len(dims) != 1:
        raise FedLearnError(f"clients disagree on feature dimension: {sorted(dims)}")

    global_state = ModelState.zeros(dims.pop())
    run = FedRun(global_state)
    for t in range(1, cfg.rounds + 1):
        selected = select_clients(cfg.total_clients, cfg.participation_rate, rng)
        updates = []
        for k in selected:
            if observer is not None:
                observer("down", k, global_state)
            update = clients[k].update(global_state, cfg)
            if observer is not None:
                observer("up", k, update)
            updates.append(update)
        global_state = aggregate(updates)
        timing = RoundTiming(
            t_local=max(clients[k].local_seconds(cfg) for k in selected),
            t_g=cfg.server_time_per_round,
            round_delay=cfg.round_delay,
        )
        loss = evaluate(global_state) if evaluate is not None else None
        run.timings.append(timing)
        run.history.append(RoundRecord(t, tuple(selected), loss, timing.t_global))
    run.model = global_state
    return run


def centralized_gd(data: ClientDataset, learning_rate: float, steps: int, batch_size: int) -> ModelState:
    """Plain mini-batch GD on pooled rows from zero, cycling batches for ``steps`` updates."""
    design = data.design()
    n = len(data)
    w = np.zeros(data.dim)
    lo = 0
    for _ in range(steps):
        hi = min(lo + batch_size, n)
        w -= learning_rate * mse_gradient(w, design[lo:hi], data.y[lo:hi])
        lo = 0 if hi >= n else hi
    return ModelState(w, n)


def predict(model: ModelState, features, *, clamp: bool = True) -> float:
    """Linear prediction for raw ``features`` (bias is appended here)."""
    x = np.asarray(features, dtype=float).reshape(-1)
    if x.shape[0] + 1 != model.dim:
        raise FedLearnError(f"expected {model.dim - 1} features, got {x.shape[0]}")
    value = float(x @ model.weights[:-1] + model.weights[-1])
    return max(value, 0.0) if clamp else value


def month_features(month: int, lag_kwh: float, lag_scale: float) -> np.ndarray:
    angle = 2.0 * math.pi * month / MONTHS
    return np.array([math.sin(angle), math.cos(angle), lag_kwh / lag_scale])


def build_client_datasets(
    scenario: Scenario,
    readings_by_month: Mapping[int, Sequence[MeterReading]],
    quantity: str,
    group_ids: Sequence[str],
) -> list[ClientDataset]:
    """One dataset per group: a row per (house, month) that has a previous month.

    ``quantity`` is "consumed" or "produced"; the target is that month's
    energy and the lag feature the same house's previous month.
    """
    if quantity not in LAG_SCALE_KWH:
        raise ValueError(f"unknown quantity {quantity!r}")
    scale = LAG_SCALE_KWH[quantity]
    months = sorted(readings_by_month)
    per_house: dict[int, dict[int, int]] = {}
    for m in months:
        for r in readings_by_month[m]:
            per_house.setdefault(r.house_id, {})[m] = getattr(r, quantity)

    datasets = []
    for gid in group_ids:
        xs, ys = [], []
        for house in scenario.houses_in(gid):
            series = per_house.get(house.id, {})
            for m in months:
                if m - 1 in series and m in series:
                    xs.append(month_features(m, wh_to_kwh(series[m - 1]), scale))
                    ys.append(wh_to_kwh(series[m]))
        if not xs:
            raise EmptyDatasetError(f"group {gid} has no consecutive-month readings")
        datasets.append(ClientDataset(np.array(xs), np.array(ys)))
    return datasets


def forecast_year(model: ModelState, last_kwh: float, lag_scale: float, months: int = MONTHS) -> list[float]:
    """Roll the model forward month by month, feeding each prediction back as the lag."""
    out = []
    lag = last_kwh
    for m in range(1, months + 1):
        value = predict(model, month_features(m, lag, lag_scale))
        out.append(value)
        lag = value
    return out
