"""Two-stage gradient harmonization for one optimisation step.

Stage one (global sift) zeroes any instance gradient whose L2 norm reaches
the top-T% quantile of a bounded history of recent norms. Stage two
(instance-wise projection) removes, for every pair of conflicting instance
gradients, the component of one that points against the other.
"""
from __future__ import annotations

import csv
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, NumericError, ParameterError, StateError

PROJ_EPS = 1e-12
GRAD_MAGIC = b"DOHAGRAD"


@dataclass
class GradientBatch:
    grads: np.ndarray
    instance_ids: list = None

    def __post_init__(self):
        try:
            g = np.array(self.grads, dtype=float)
        except ValueError as exc:
            raise ParameterError("gradient vectors must share one dimension") from exc
        if g.ndim != 2 or g.shape[0] < 1:
            raise ParameterError(f"gradient batch must be an (N, D) array with N >= 1, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise DataError("gradient batch contains non-finite values")
        self.grads = g
        if self.instance_ids is None:
            self.instance_ids = list(range(g.shape[0]))
        elif len(self.instance_ids) != g.shape[0]:
            raise ParameterError("instance_ids length does not match batch size")

    def __len__(self):
        return self.grads.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.grads, axis=1)


class NormQueue:
    """Bounded FIFO of gradient norms (oldest evicted first)."""

    def __init__(self, max_len: int = 150, warmup: int = 20, norms: Iterable[float] = ()):
        if max_len < 1:
            raise ParameterError("max_len must be >= 1")
        self.max_len = int(max_len)
        self.warmup = int(warmup)
        self._norms = deque(maxlen=self.max_len)
        self.extend(norms)

    def extend(self, norms: Iterable[float]) -> None:
        for v in norms:
            v = float(v)
            if not (v >= 0 and math.isfinite(v)):
                raise DataError(f"queue norms must be finite and >= 0, got {v}")
            self._norms.append(v)

    def __len__(self):
        return len(self._norms)

    @property
    def norms(self) -> np.ndarray:
        return np.array(self._norms, dtype=float)

    @property
    def warmed_up(self) -> bool:
        return len(self) >= self.warmup

    def copy(self) -> "NormQueue":
        return NormQueue(self.max_len, self.warmup, self._norms)

    def __repr__(self):
        return f"NormQueue(len={len(self)}, max_len={self.max_len}, warmup={self.warmup})"


@dataclass
class HarmonizerConfig:
    T_percent: float = 5.0
    queue_len: int = 150
    warmup: int = 20
    seed: int = 0
    # Alternative reading of the projection step: only kept (post-sift)
    # gradients act as projection targets.
    exclude_sifted_targets: bool = False

    def __post_init__(self):
        if not (0 < self.T_percent < 100):
            raise ParameterError(f"T_percent must lie in (0, 100), got {self.T_percent}")
        if self.queue_len < 1:
            raise ParameterError("queue_len must be >= 1")

    def new_queue(self) -> NormQueue:
        return NormQueue(self.queue_len, self.warmup)


def top_quantile_threshold(queue: NormQueue, T_percent: float) -> float:
    """Nearest-rank upper quantile: the value exceeded by at most T% of the queue."""
    values = np.sort(queue.norms if isinstance(queue, NormQueue) else np.asarray(queue, float))
    n = values.size
    if n == 0:
        raise StateError("norm queue is empty")
    # round away float fuzz before ceil, e.g. 0.95 * 100 -> 95.00000000000001
    rank = math.ceil(round((100.0 - T_percent) * n / 100.0, 9))
    rank = min(max(rank, 1), n)
    return float(values[rank - 1])


def ggh_sift(batch: GradientBatch, queue: NormQueue, cfg: HarmonizerConfig):
    """Zero every instance whose norm is not strictly below the queue threshold.

    Returns ``(sifted_batch, kept_mask)``; the input batch is not modified.
    While the queue holds fewer than ``queue.warmup`` norms nothing is sifted.
    """
    kept = np.ones(len(batch), dtype=bool)
    if queue.warmed_up and len(queue) > 0:
        kept = batch.norms < top_quantile_threshold(queue, cfg.T_percent)
    out = batch.grads.copy()
    out[~kept] = 0.0
    return GradientBatch(out, list(batch.instance_ids)), kept


@dataclass
class ProjectionLog:
    """One applied projection: instance ``i`` deflected by target ``j``."""

    i: int
    j: int
    dot_before: float
    dot_after: float


def _perm_rng(seed: int, step: int, i: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(step), int(i)])


def igh_project(
    batch: GradientBatch,
    seed: int = 0,
    step: int = 0,
    targets: np.ndarray | None = None,
    log: list | None = None,
) -> GradientBatch:
    """Project each gradient off every target it conflicts with.

    For ``i`` in ascending order the other indices are visited in a random
    order drawn from a generator keyed by ``(seed, step, i)``. Whenever the
    working vector has a negative dot product with target ``j``, its
    component along ``target[j]`` is removed. Targets are never the
    in-progress projected vectors: they default to the input gradients and
    may be supplied separately (e.g. the raw, pre-sift gradients).
    """
    G = batch.grads
    T = G if targets is None else np.asarray(targets, dtype=float)
    if T.shape != G.shape:
        raise ParameterError(f"targets shape {T.shape} does not match batch {G.shape}")
    n = G.shape[0]
    sq = np.einsum("ij,ij->i", T, T)
    out = np.empty_like(G)
    for i in range(n):
        work = G[i].copy()
        others = np.array([j for j in range(n) if j != i], dtype=int)
        for j in _perm_rng(seed, step, i).permutation(others):
            if sq[j] < PROJ_EPS:
                continue
            dot = float(work @ T[j])
            if dot < 0:
                work = work - (dot / sq[j]) * T[j]
                if log is not None:
                    log.append(ProjectionLog(i, int(j), dot, float(work @ T[j])))
        if not np.all(np.isfinite(work)):
            raise NumericError(f"projection of instance {i} produced non-finite values")
        out[i] = work
    return GradientBatch(out, list(batch.instance_ids))


@dataclass
class HarmonizeResult:
    update: np.ndarray
    kept: np.ndarray
    raw_norms: np.ndarray
    threshold: float | None
    projections: list = field(default_factory=list)

    def zeroed_ids(self, batch: GradientBatch) -> list:
        return [iid for iid, k in zip(batch.instance_ids, self.kept) if not k]

    def sifted_deflections(self) -> list:
        """Projections in which a sifted instance deflected a kept one."""
        return [p for p in self.projections if self.kept[p.i] and not self.kept[p.j]]


def harmonize_step(
    batch: GradientBatch,
    queue: NormQueue,
    cfg: HarmonizerConfig,
    step: int = 0,
    sift: bool = True,
    project: bool = True,
) -> HarmonizeResult:
    """Sift, project and average one batch of instance gradients.

    The update is the mean over all N slots (zeroed slots included). The raw
    pre-sift norms are then pushed onto ``queue``, which is the only
    argument mutated. ``sift``/``project`` switch the two stages off for
    ablations; the queue is updated regardless.
    """
    raw_norms = batch.norms
    threshold = None
    if sift:
        if queue.warmed_up and len(queue):
            threshold = top_quantile_threshold(queue, cfg.T_percent)
        sifted, kept = ggh_sift(batch, queue, cfg)
    else:
        sifted, kept = batch, np.ones(len(batch), dtype=bool)
    projections: list = []
    if project:
        targets = sifted.grads if cfg.exclude_sifted_targets else batch.grads
        harmonized = igh_project(sifted, cfg.seed, step, targets=targets, log=projections)
    else:
        harmonized = sifted
    update = harmonized.grads.sum(axis=0) / len(batch)
    queue.extend(raw_norms)
    return HarmonizeResult(update, kept, raw_norms, threshold, projections)


# ---------------------------------------------------------------------------
# file formats


def write_gradients(batch: GradientBatch, path) -> None:
    """Binary: magic, u32 N, u32 D, then N*D little-endian float64 values."""
    n, d = batch.grads.shape
    with open(path, "wb") as fh:
        fh.write(GRAD_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(batch.grads.astype("<f8").tobytes())


def read_gradients(path) -> GradientBatch:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_gradients_csv(path)
    raw = path.read_bytes()
    if raw[:8] != GRAD_MAGIC:
        raise DataError(f"{path}: bad magic, expected {GRAD_MAGIC!r}")
    n, d = struct.unpack("<II", raw[8:16])
    body = raw[16:]
    if len(body) != 8 * n * d:
        raise DataError(f"{path}: expected {n}x{d} float64 values, found {len(body)} bytes")
    return GradientBatch(np.frombuffer(body, dtype="<f8").reshape(n, d))


def write_gradients_csv(batch: GradientBatch, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in batch.grads:
            w.writerow([repr(float(v)) for v in row])


def read_gradients_csv(path) -> GradientBatch:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    if len({len(r) for r in rows}) > 1:
        raise ParameterError(f"{path}: rows have unequal dimension")
    return GradientBatch(np.array(rows))


def write_queue(queue: NormQueue, path) -> None:
    Path(path).write_text("".join(f"{v!r}\n" for v in queue.norms.tolist()))


def read_queue(path, max_len: int = 150, warmup: int = 20) -> NormQueue:
    values: Sequence[float] = [float(l) for l in Path(path).read_text().split() if l.strip()]
    return NormQueue(max_len, warmup, values)
