"""Single-pair entropic optimal transport, solved in the log domain.

This module is the reference implementation: discrete histograms, the
kernel/scaling iteration in both linear and log form, stable evaluation of
the transport cost, and the analytic multiplier gradients. Everything here
works on one (mu, nu) pair; the batched engine lives in `sinkloss.batch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DivisionUnderflow,
    NaNInput,
    NaNProduced,
    NegativeMass,
    NonFinite,
    NotNormalised,
    ZeroMassGradient,
)

NEG_INF = float("-inf")

MASS_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Histogram:
    """A discrete probability measure: nonnegative masses summing to 1."""

    mass: np.ndarray

    @property
    def d(self) -> int:
        return self.mass.shape[0]


@dataclass(frozen=True)
class CostMatrix:
    """Ground cost between the support points of two histograms."""

    cost: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float)
        if c.ndim != 2:
            raise DimensionMismatch(f"cost must be a matrix, got ndim={c.ndim}")
        if not np.isfinite(c).all():
            i, j = np.argwhere(~np.isfinite(c))[0]
            raise ValueError(f"non-finite cost at ({i}, {j})")
        if (c < 0).any():
            i, j = np.argwhere(c < 0)[0]
            raise ValueError(f"negative cost at ({i}, {j})")
        object.__setattr__(self, "cost", c)

    @property
    def d1(self) -> int:
        return self.cost.shape[0]

    @property
    def d2(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver parameters.

    lam is the entropy-regularisation weight (same units as the cost).
    tolerance is the L-infinity marginal-residual stopping threshold;
    0 disables early stopping and runs exactly max_iters iterations.
    """

    lam: float
    max_iters: int = 1000
    tolerance: float = 1e-9
    check_interval: int = 10

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (math.isfinite(self.tolerance) and self.tolerance >= 0):
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.check_interval < 1:
            raise ValueError(f"check_interval must be >= 1, got {self.check_interval}")


@dataclass(frozen=True)
class DualPotentials:
    """Log-domain scaling vectors of a solve.

    Entries are -inf exactly where the corresponding marginal mass is zero,
    finite everywhere else.
    """

    log_u: np.ndarray
    log_v: np.ndarray
    lam: float


@dataclass(frozen=True)
class TransportPlan:
    """A coupling: nonnegative matrix whose marginals are mu and nu."""

    p: np.ndarray


@dataclass(frozen=True)
class SinkhornResult:
    """Converged (or stopped) solve: potentials, costs and loop diagnostics."""

    potentials: DualPotentials
    cost_e0: float
    cost_elambda: float
    iterations_run: int
    final_residual: float
    converged: bool


@dataclass(frozen=True)
class GradientPair:
    """Mean-zero loss gradients with respect to both marginals."""

    grad_mu: np.ndarray
    grad_nu: np.ndarray


# ---------------------------------------------------------------------------
# validation


def validate_histogram(raw) -> Histogram:
    """Check and wrap a raw mass vector; the input is never renormalised.

    Raises NonFinite, NegativeMass or NotNormalised on the first violation.
    """
    mass = np.asarray(raw, dtype=float)
    if mass.ndim != 1:
        raise DimensionMismatch(f"histogram must be a vector, got ndim={mass.ndim}")
    bad = ~np.isfinite(mass)
    if bad.any():
        raise NonFinite(int(np.argmax(bad)))
    neg = mass < 0
    if neg.any():
        raise NegativeMass(int(np.argmax(neg)))
    total = float(mass.sum())
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise NotNormalised(total)
    return Histogram(mass=mass)


# ---------------------------------------------------------------------------
# log-sum-exp primitives


def logsumexp_online(xs) -> float:
    """log(sum(exp(xs))) in a single pass with a running maximum.

    The running sum of exp(x - max) is rescaled whenever a new maximum is
    seen, so no intermediate exponential can overflow. -inf entries
    contribute nothing; an empty or all-(-inf) input returns -inf.
    """
    m = NEG_INF
    s = 0.0
    for x in np.asarray(xs, dtype=float).ravel():
        if x != x:
            raise NaNInput("NaN entry in logsumexp input")
        if x == NEG_INF:
            continue
        if x > m:
            s = s * math.exp(m - x) + 1.0
            m = x
        else:
            s += math.exp(x - m)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(s)


def _logsumexp(arr: np.ndarray, axis: int) -> np.ndarray:
    """Max-extracted logsumexp along one axis; -inf slices stay -inf."""
    m = arr.max(axis=axis)
    with np.errstate(invalid="ignore"):
        out = m + np.log(np.exp(arr - np.expand_dims(m, axis)).sum(axis=axis))
    dead = np.isneginf(m)
    if dead.any():
        out = np.where(dead, NEG_INF, out)
    return out


def _logsumexp_all(arr: np.ndarray) -> float:
    """Max-extracted logsumexp over every entry of an array."""
    m = float(arr.max()) if arr.size else NEG_INF
    if m == NEG_INF:
        return NEG_INF
    return m + float(np.log(np.exp(arr - m).sum()))


# ---------------------------------------------------------------------------
# iteration steps


def kernel_matrix(c: CostMatrix, lam: float) -> np.ndarray:
    """Elementwise exp(-cost / lam). Entries may underflow to exact zero;
    this is the linear-domain path whose failure motivates the log path."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    return np.exp(-c.cost / lam)


def plain_sinkhorn_step(
    u: np.ndarray, K: np.ndarray, mu: Histogram, nu: Histogram
) -> tuple[np.ndarray, np.ndarray]:
    """One linear-domain rescaling sweep: v from the nu constraint, then u.

    Returns (v_next, u_next). Raises DivisionUnderflow if a kernel product
    is exactly zero where the corresponding marginal mass is positive.
    """
    den_v = K.T @ u
    bad = (den_v == 0) & (nu.mass > 0)
    if bad.any():
        raise DivisionUnderflow(int(np.argmax(bad)))
    v = np.zeros_like(nu.mass)
    np.divide(nu.mass, den_v, out=v, where=nu.mass > 0)

    den_u = K @ v
    bad = (den_u == 0) & (mu.mass > 0)
    if bad.any():
        raise DivisionUnderflow(int(np.argmax(bad)))
    u_next = np.zeros_like(mu.mass)
    np.divide(mu.mass, den_u, out=u_next, where=mu.mass > 0)
    return v, u_next


def _update_log_v(A, log_u, log_nu, T):
    """log_nu - logsumexp_i(A[i, j] + log_u[i]), written into fresh arrays.

    T is a preallocated (d1, d2) scratch buffer.
    """
    np.add(A, log_u[:, None], out=T)
    m = T.max(axis=0)
    np.subtract(T, m[None, :], out=T)
    np.exp(T, out=T)
    s = T.sum(axis=0)
    np.log(s, out=s)
    return log_nu - m - s


def _update_log_u(A, log_v, log_mu, T):
    """log_mu - logsumexp_j(A[i, j] + log_v[j])."""
    np.add(A, log_v[None, :], out=T)
    m = T.max(axis=1)
    np.subtract(T, m[:, None], out=T)
    np.exp(T, out=T)
    s = T.sum(axis=1)
    np.log(s, out=s)
    return log_mu - m - s


def log_sinkhorn_step(
    log_u: np.ndarray,
    c: CostMatrix,
    lam: float,
    log_mu: np.ndarray,
    log_nu: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One log-domain sweep: exp of this step reproduces plain_sinkhorn_step.

    Zero-mass bins (log marginal = -inf) yield -inf outputs exactly; all
    other outputs are finite for finite costs.
    """
    A = -c.cost / lam
    T = np.empty_like(A)
    log_v_next = _update_log_v(A, log_u, log_nu, T)
    log_u_next = _update_log_u(A, log_v_next, log_mu, T)
    if np.isnan(log_v_next).any() or np.isnan(log_u_next).any():
        raise NaNProduced("NaN in log-domain update")
    return log_v_next, log_u_next


# ---------------------------------------------------------------------------
# solver loop


def _marginal_residual_from(A, log_u, log_v, mu_mass, nu_mass) -> float:
    row = np.exp(log_u + _logsumexp(A + log_v[None, :], axis=1))
    col = np.exp(log_v + _logsumexp(A + log_u[:, None], axis=0))
    return max(
        float(np.abs(row - mu_mass).max()),
        float(np.abs(col - nu_mass).max()),
    )


def run_sinkhorn(
    mu: Histogram, nu: Histogram, c: CostMatrix, config: SinkhornConfig
) -> SinkhornResult:
    """Iterate the log-domain sweep until the marginal residual clears
    config.tolerance (checked every check_interval iterations) or max_iters
    is hit.

    Deterministic for fixed inputs. Starts from log_u = 0 on the support of
    mu and -inf off it.
    """
    if c.d1 != mu.d or c.d2 != nu.d:
        raise DimensionMismatch(
            f"cost is {c.d1}x{c.d2} but histograms have d1={mu.d}, d2={nu.d}"
        )
    lam = config.lam
    A = -c.cost / lam
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu.mass)
        log_nu = np.log(nu.mass)

    log_u = np.where(mu.mass > 0, 0.0, NEG_INF)
    log_v = np.full(nu.d, NEG_INF)
    T = np.empty_like(A)

    iterations = 0
    residual = None
    converged = False
    for k in range(1, config.max_iters + 1):
        log_v = _update_log_v(A, log_u, log_nu, T)
        log_u = _update_log_u(A, log_v, log_mu, T)
        iterations = k
        if config.tolerance > 0 and k % config.check_interval == 0:
            residual = _marginal_residual_from(A, log_u, log_v, mu.mass, nu.mass)
            if residual <= config.tolerance:
                converged = True
                break

    if np.isnan(log_u).any() or np.isnan(log_v).any():
        raise NaNProduced("NaN in solver state")
    if residual is None or not converged:
        residual = _marginal_residual_from(A, log_u, log_v, mu.mass, nu.mass)
        converged = config.tolerance > 0 and residual <= config.tolerance

    potentials = DualPotentials(log_u=log_u, log_v=log_v, lam=lam)
    plan = transport_plan(potentials, c)
    return SinkhornResult(
        potentials=potentials,
        cost_e0=primal_cost(potentials, c),
        cost_elambda=regularized_cost(plan, c, lam),
        iterations_run=iterations,
        final_residual=residual,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# evaluation

def transport_plan(pot: DualPotentials, c: CostMatrix) -> TransportPlan:
    """Materialise the coupling exp(log_u[i] - c[i,j]/lam + log_v[j])."""
    if pot.log_u.shape[0] != c.d1 or pot.log_v.shape[0] != c.d2:
        raise DimensionMismatch("potentials do not match cost dimensions")
    A = -c.cost / pot.lam
    return TransportPlan(p=np.exp(pot.log_u[:, None] + A + pot.log_v[None, :]))


def entropy(p: TransportPlan) -> float:
    """-sum(p log p) with the 0*log(0) = 0 convention."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p.p > 0, p.p * np.log(p.p), 0.0)
    return float(-terms.sum())


def primal_cost(pot: DualPotentials, c: CostMatrix) -> float:
    """Unregularised transport cost sum(p * c), evaluated in log space.

    Computed as exp(logsumexp(log_u[i] - c[i,j]/lam + log(c[i,j]) + log_v[j]))
    so that no intermediate plan entry can underflow; zero-cost terms carry
    log(c) = -inf and drop out of the reduction exactly.
    """
    if pot.log_u.shape[0] != c.d1 or pot.log_v.shape[0] != c.d2:
        raise DimensionMismatch("potentials do not match cost dimensions")
    A = -c.cost / pot.lam
    with np.errstate(divide="ignore"):
        log_c = np.log(c.cost)
    terms = pot.log_u[:, None] + A + log_c + pot.log_v[None, :]
    return float(np.exp(_logsumexp_all(terms)))


def regularized_cost(p: TransportPlan, c: CostMatrix, lam: float) -> float:
    """sum(p * c) - lam * entropy(p)."""
    return float((p.p * c.cost).sum()) - lam * entropy(p)


def gradients(pot: DualPotentials) -> GradientPair:
    """Mean-zero gradients of the regularised objective w.r.t. mu and nu.

    grad_mu = lam * (log_u - mean(log_u)) and analogously for nu; the
    additive constants of the multiplier reparameterisation vanish under
    the mean subtraction. Refuses potentials with -inf entries (zero-mass
    bins) rather than inventing a value there.
    """
    if np.isneginf(pot.log_u).any() or np.isneginf(pot.log_v).any():
        raise ZeroMassGradient()
    grad_mu = pot.lam * (pot.log_u - pot.log_u.mean())
    grad_nu = pot.lam * (pot.log_v - pot.log_v.mean())
    return GradientPair(grad_mu=grad_mu, grad_nu=grad_nu)


def marginal_residual(
    pot: DualPotentials, c: CostMatrix, mu: Histogram, nu: Histogram
) -> float:
    """L-infinity distance between the implied plan's marginals and (mu, nu),
    computed in log space without materialising the plan."""
    if c.d1 != mu.d or c.d2 != nu.d or pot.log_u.shape[0] != c.d1 or pot.log_v.shape[0] != c.d2:
        raise DimensionMismatch("dimensions disagree")
    A = -c.cost / pot.lam
    return _marginal_residual_from(A, pot.log_u, pot.log_v, mu.mass, nu.mass)
