"""Batched solver: fused matmul-shaped logsumexp reductions over histogram
batches sharing one cost matrix.

The inner reduction consumes one cost row at a time into a streaming
accumulator vectorised over all (lane, output) cells, so peak auxiliary
memory stays O(B * (d1 + d2)) and no (B, d1, d2) tensor is ever built.
Worker parallelism splits the reduction into contiguous spans whose partial
accumulators are merged in ascending span order, which makes results
independent of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    NEG_INF,
    CostMatrix,
    DualPotentials,
    SinkhornConfig,
    validate_histogram,
)
from .errors import NaNProduced, ShapeMismatch, ZeroMassGradient


@dataclass(frozen=True)
class HistogramBatch:
    """B histograms of equal length, one per row."""

    mass: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.mass.shape[0]

    @property
    def d(self) -> int:
        return self.mass.shape[1]


def validate_histogram_batch(raw) -> HistogramBatch:
    """Validate every row as a histogram; offending rows get a .row attribute."""
    mass = np.asarray(raw, dtype=float)
    if mass.ndim != 2:
        raise ShapeMismatch(f"batch must be a 2-D array, got ndim={mass.ndim}")
    for b in range(mass.shape[0]):
        try:
            validate_histogram(mass[b])
        except Exception as err:
            err.row = b
            raise
    return HistogramBatch(mass=mass)


class OnlineLseAccumulator:
    """Streaming logsumexp state over a grid of independent cells.

    Holds a running maximum and a running sum of exp(x - running_max) per
    cell; consuming a new slice rescales the sum whenever the maximum
    grows. Partial accumulators over disjoint element sets merge into the
    accumulator of the union, so a reduction can be split across workers
    and combined afterwards.
    """

    __slots__ = ("running_max", "running_sum", "count", "_maybe_dead", "_spare", "_inc")

    def __init__(self, shape=()):
        if isinstance(shape, int):
            shape = (shape,)
        self.running_max = np.full(shape, NEG_INF)
        self.running_sum = np.zeros(shape)
        self.count = 0
        # cells that have not seen a finite element need -inf guards
        self._maybe_dead = True
        # scratch buffers so the hot loop allocates nothing per slice
        self._spare = np.empty(shape)
        self._inc = np.empty(shape)

    @classmethod
    def of(cls, values) -> "OnlineLseAccumulator":
        """Scalar accumulator fed with each element of `values` in turn."""
        acc = cls(())
        for x in np.asarray(values, dtype=float).ravel():
            acc.consume(x)
        return acc

    def consume(self, values) -> None:
        """Fold one slice (shaped like the cell grid) into the running state."""
        term = np.asarray(values, dtype=float)
        if term.shape != self.running_max.shape:
            raise ShapeMismatch(
                f"slice shape {term.shape} != accumulator shape {self.running_max.shape}"
            )
        old_max, new_max, inc = self.running_max, self._spare, self._inc
        np.maximum(old_max, term, out=new_max)
        with np.errstate(invalid="ignore"):
            # old_max's buffer is recycled to hold the rescaling factor
            np.subtract(old_max, new_max, out=old_max)
            np.exp(old_max, out=old_max)
            np.subtract(term, new_max, out=inc)
            np.exp(inc, out=inc)
        if self._maybe_dead:
            dead = np.isneginf(new_max)
            np.copyto(old_max, 0.0, where=dead)
            np.copyto(inc, 0.0, where=dead)
            self._maybe_dead = bool(dead.any())
        self.running_sum *= old_max
        self.running_sum += inc
        self.running_max, self._spare = new_max, old_max
        self.count += 1

    def merge(self, other: "OnlineLseAccumulator") -> "OnlineLseAccumulator":
        """Accumulator of the union of both element sets (pure)."""
        if self.running_max.shape != other.running_max.shape:
            raise ShapeMismatch("accumulator shapes differ")
        out = OnlineLseAccumulator(self.running_max.shape)
        new_max = np.maximum(self.running_max, other.running_max)
        dead = np.isneginf(new_max)
        with np.errstate(invalid="ignore"):
            scale_a = np.where(dead, 0.0, np.exp(self.running_max - new_max))
            scale_b = np.where(dead, 0.0, np.exp(other.running_max - new_max))
        out.running_max = new_max
        out.running_sum = self.running_sum * scale_a + other.running_sum * scale_b
        out.count = self.count + other.count
        out._maybe_dead = bool(dead.any())
        return out

    def finalise(self):
        """running_max + log(running_sum); empty cells finalise to -inf."""
        with np.errstate(divide="ignore"):
            out = self.running_max + np.log(self.running_sum)
        if out.ndim == 0:
            return float(out)
        return out


def accumulator_merge(
    a: OnlineLseAccumulator, b: OnlineLseAccumulator
) -> OnlineLseAccumulator:
    """Combine two partial reductions; commutative and associative up to
    rounding of the finalised value."""
    return a.merge(b)


# ---------------------------------------------------------------------------
# fused reduction


def _span_bounds(d: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous index spans in ascending order, at most `workers` of them."""
    workers = max(1, min(workers, d))
    base, rem = divmod(d, workers)
    bounds = []
    start = 0
    for w in range(workers):
        size = base + (1 if w < rem else 0)
        if size:
            bounds.append((start, start + size))
            start += size
    return bounds


def _reduce_span(log_x: np.ndarray, A: np.ndarray, start: int, stop: int) -> OnlineLseAccumulator:
    """Accumulate rows [start, stop) of A against the matching log_x columns."""
    B = log_x.shape[0]
    d2 = A.shape[1]
    acc = OnlineLseAccumulator((B, d2))
    buf = np.empty((B, d2))
    for i in range(start, stop):
        np.add.outer(log_x[:, i], A[i], out=buf)
        acc.consume(buf)
    return acc


# below this many cells-times-rows, thread dispatch costs more than it buys
# (GIL contention on small ufunc loops); the span partition and merge order
# are unchanged either way, so results do not depend on this switch
_PARALLEL_WORK_THRESHOLD = 10_000_000


def _fused_lse(log_x, A, workers=1, executor=None):
    """logsumexp_i(A[i, j] + log_x[b, i]) for every (b, j), shape (B, d2)."""
    spans = _span_bounds(A.shape[0], workers)
    if len(spans) == 1:
        return _reduce_span(log_x, A, *spans[0]).finalise()
    work = log_x.shape[0] * A.shape[0] * A.shape[1]
    if work < _PARALLEL_WORK_THRESHOLD:
        accs = [_reduce_span(log_x, A, a, b) for a, b in spans]
    elif executor is None:
        with ThreadPoolExecutor(max_workers=len(spans)) as ex:
            accs = list(ex.map(lambda s: _reduce_span(log_x, A, *s), spans))
    else:
        accs = list(executor.map(lambda s: _reduce_span(log_x, A, *s), spans))
    merged = accs[0]
    for part in accs[1:]:
        merged = merged.merge(part)
    return merged.finalise()


def _as_cost_array(c) -> np.ndarray:
    return c.cost if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)


def fused_log_reduction(log_u, c, lam: float, log_nu, workers: int = 1) -> np.ndarray:
    """out[b, j] = log_nu[b, j] - logsumexp_i(-c[i, j]/lam + log_u[b, i]).

    One batched half-sweep of the log-domain iteration. The transposed
    variant (reducing over j) is the same call with c transposed and the
    roles of the two marginals swapped. Results are identical for any
    worker count up to accumulator-merge rounding.
    """
    cost = _as_cost_array(c)
    log_u = np.asarray(log_u, dtype=float)
    log_nu = np.asarray(log_nu, dtype=float)
    if log_u.ndim != 2 or log_nu.ndim != 2:
        raise ShapeMismatch("log_u and log_nu must be 2-D (batch, dim)")
    if log_u.shape[0] != log_nu.shape[0]:
        raise ShapeMismatch(
            f"batch sizes differ: {log_u.shape[0]} vs {log_nu.shape[0]}"
        )
    if log_u.shape[1] != cost.shape[0] or log_nu.shape[1] != cost.shape[1]:
        raise ShapeMismatch(
            f"cost is {cost.shape} but potentials have d1={log_u.shape[1]}, d2={log_nu.shape[1]}"
        )
    A = -cost / lam
    return log_nu - _fused_lse(log_u, A, workers=workers)


# ---------------------------------------------------------------------------
# forward / backward


@dataclass(frozen=True)
class BatchLossResult:
    """Per-lane transport costs plus the potentials backward needs."""

    cost_e0: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    lam: float
    iterations_run: int
    residuals: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.cost_e0.shape[0]

    def lane_potentials(self, b: int) -> DualPotentials:
        return DualPotentials(log_u=self.log_u[b], log_v=self.log_v[b], lam=self.lam)


def _resolve_workers(workers) -> int:
    if workers is None:
        return os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return int(workers)


def batch_forward(
    mu: HistogramBatch,
    nu: HistogramBatch,
    c: CostMatrix,
    config: SinkhornConfig,
    workers: int | None = None,
) -> BatchLossResult:
    """Run the log-domain iteration for all lanes in lockstep.

    Every lane runs the same number of iterations: the loop stops once all
    residuals clear config.tolerance (checked every check_interval) or at
    max_iters. Per-lane costs are evaluated with the same fused reduction
    used by the iteration; the returned potentials are the complete state
    the backward pass needs.
    """
    if mu.batch_size != nu.batch_size:
        raise ShapeMismatch(
            f"batch sizes differ: mu has {mu.batch_size}, nu has {nu.batch_size}"
        )
    if mu.d != c.d1 or nu.d != c.d2:
        raise ShapeMismatch(
            f"cost is {c.d1}x{c.d2} but batches have d1={mu.d}, d2={nu.d}"
        )
    workers = _resolve_workers(workers)
    lam = config.lam
    A = -c.cost / lam
    At = np.ascontiguousarray(A.T)
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu.mass)
        log_nu = np.log(nu.mass)

    log_u = np.where(mu.mass > 0, 0.0, NEG_INF)
    log_v = np.full_like(log_nu, NEG_INF)

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        def half_sweep(log_x, rows, log_target):
            return log_target - _fused_lse(log_x, rows, workers=workers, executor=executor)

        def lane_residuals():
            row = np.exp(log_u + _fused_lse(log_v, At, workers=workers, executor=executor))
            col = np.exp(log_v + _fused_lse(log_u, A, workers=workers, executor=executor))
            return np.maximum(
                np.abs(row - mu.mass).max(axis=1),
                np.abs(col - nu.mass).max(axis=1),
            )

        iterations = 0
        residuals = None
        converged = False
        for k in range(1, config.max_iters + 1):
            log_v = half_sweep(log_u, A, log_nu)
            log_u = half_sweep(log_v, At, log_mu)
            iterations = k
            if config.tolerance > 0 and k % config.check_interval == 0:
                residuals = lane_residuals()
                if residuals.max() <= config.tolerance:
                    converged = True
                    break
        if residuals is None or not converged:
            residuals = lane_residuals()

        if np.isnan(log_u).any() or np.isnan(log_v).any():
            raise NaNProduced("NaN in batched solver state")

        # stable per-lane cost: same fused kernel over -c/lam + log(c), then a
        # final streamed fold over j
        with np.errstate(divide="ignore"):
            G = A + np.log(c.cost)
        S = _fused_lse(log_u, G, workers=workers, executor=executor)
        acc = OnlineLseAccumulator((mu.batch_size,))
        for j in range(nu.d):
            acc.consume(S[:, j] + log_v[:, j])
        cost_e0 = np.exp(acc.finalise())
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    return BatchLossResult(
        cost_e0=cost_e0,
        log_u=log_u,
        log_v=log_v,
        lam=lam,
        iterations_run=iterations,
        residuals=residuals,
    )


def batch_backward(
    result: BatchLossResult, upstream
) -> tuple[np.ndarray, np.ndarray]:
    """Mean-zero gradients per lane, scaled by the upstream cotangent.

    Reads only the final potentials: no iteration is rerun and no
    per-iteration history exists to consume, so the cost is
    O(B * (d1 + d2)).
    """
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (result.batch_size,):
        raise ShapeMismatch(
            f"upstream must have shape ({result.batch_size},), got {upstream.shape}"
        )
    dead_u = np.isneginf(result.log_u).any(axis=1)
    dead_v = np.isneginf(result.log_v).any(axis=1)
    dead = dead_u | dead_v
    if dead.any():
        raise ZeroMassGradient(lane=int(np.argmax(dead)))
    lam = result.lam
    scale = upstream[:, None]
    grad_mu = scale * (lam * (result.log_u - result.log_u.mean(axis=1, keepdims=True)))
    grad_nu = scale * (lam * (result.log_v - result.log_v.mean(axis=1, keepdims=True)))
    return grad_mu, grad_nu
