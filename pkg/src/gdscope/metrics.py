"""Per-iterate diagnostics for (S)GD runs.

The two primitive quantities are the relative progress ratio

    rp(theta) = (f(theta - eta*grad) - f(theta)) / (eta * ||grad||^2)

(negative means the step decreased the loss) and the directional smoothness

    dir_v(theta) = <v, grad(theta) - grad(theta - v)> / ||v||^2,

a secant curvature along an update direction, which saturates near 2/eta when
the iterates oscillate. They are tied together by an exact identity,

    rp(theta) = -1 + (eta/2) * 2 * integral_0^1 tau * dir_{eta*tau*grad}(theta) dtau,

which this module verifies numerically by trapezoidal quadrature on a tau
grid, with the tau -> 0 endpoint linearly extrapolated from the two smallest
grid points. Sharpness (largest Hessian eigenvalue) is estimated matrix-free
by two-phase shifted power iteration, and the stochastic analogues of rp are
estimated by Monte Carlo over minibatches.

All functions are pure given (cost, theta, parameters, seed); sweeps reduce
in a fixed order so repeated calls are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .costs import CostFunction, as_params
from .errors import ContractViolation, NearStationaryError, PowerIterationError, ZeroDirectionError

GRAD_FLOOR_COEFF = 1e-12

_trapz = getattr(np, "trapezoid", None) or np.trapz


def grad_floor(loss: float) -> float:
    """Gradient-norm floor below which rp/dir are reported undefined, not NaN."""
    return GRAD_FLOOR_COEFF * (1.0 + abs(loss))


@dataclass
class MetricSample:
    """One instrumented iterate. Fields are None exactly when undefined."""

    iteration: int
    loss: float
    grad_norm: float
    rp: Optional[float] = None
    dir: Optional[float] = None
    sharpness: Optional[float] = None
    identity_residual: Optional[float] = None
    tau_dir_mean: Optional[float] = None
    tau_dir_std: Optional[float] = None


@dataclass(frozen=True)
class QuadratureGrid:
    """Strictly increasing tau nodes in (0, 1] for the dir-integral quadrature."""

    taus: np.ndarray

    def __post_init__(self):
        taus = np.ascontiguousarray(self.taus, dtype=np.float64)
        if taus.ndim != 1 or taus.size == 0:
            raise ContractViolation("tau grid must be a nonempty 1-D sequence")
        if taus[0] <= 0.0 or taus[-1] > 1.0 or np.any(np.diff(taus) <= 0.0):
            raise ContractViolation("tau grid must be strictly increasing within (0, 1]")
        taus.setflags(write=False)
        object.__setattr__(self, "taus", taus)

    @classmethod
    def default(cls, points: int = 100) -> "QuadratureGrid":
        return cls(np.linspace(1.0 / points, 1.0, points))


class IdentityCheck(NamedTuple):
    lhs: float
    rhs: float
    residual: float


def _gradient_above_floor(cost, theta):
    theta = as_params(theta, cost.dimension)
    loss = cost.value(theta)
    g = cost.gradient(theta)
    gnorm = float(np.linalg.norm(g))
    if gnorm < grad_floor(loss):
        raise NearStationaryError(
            f"gradient norm {gnorm:.3e} below floor {grad_floor(loss):.3e}: "
            "metric undefined at near-stationary point"
        )
    return theta, loss, g, gnorm


def relative_progress(cost: CostFunction, theta, eta: float) -> float:
    """One-step loss change normalized by eta * ||grad||^2; negative = descent."""
    if eta <= 0:
        raise ContractViolation("eta must be positive")
    theta, loss, g, gnorm = _gradient_above_floor(cost, theta)
    return (cost.value(theta - eta * g) - loss) / (eta * gnorm**2)


def directional_smoothness(cost: CostFunction, theta, v) -> float:
    """Secant curvature <v, grad(theta) - grad(theta - v)> / ||v||^2."""
    theta = as_params(theta, cost.dimension)
    v = np.ascontiguousarray(v, dtype=np.float64)
    vv = float(v @ v)
    if not math.isfinite(vv) or vv == 0.0:
        raise ZeroDirectionError("direction norm is zero (or underflows): dir undefined")
    g = cost.gradient(theta)
    g_back = cost.gradient(theta - v)
    return float(v @ (g - g_back)) / vv


def _dir_along(cost, theta, g_at_theta, direction, eta, taus):
    """dir_{eta*tau*direction}(theta) for each tau, reusing grad(theta)."""
    out = np.empty(taus.shape[0])
    for i, tau in enumerate(taus):
        v = (eta * tau) * direction
        vv = float(v @ v)
        if vv == 0.0:
            raise ZeroDirectionError("tau step underflowed to the zero direction")
        g_back = cost.gradient(theta - v)
        out[i] = float(v @ (g_at_theta - g_back)) / vv
    return out


def _weighted_integral(taus, dirs, include_zero_node=True):
    """Trapezoid of g(tau) = 2*tau*dir(tau), with g(0) linearly extrapolated.

    With a single grid point the extrapolation degenerates to treating dir as
    constant, i.e. g(0) = 0 and the integral is 2 * 0.5 * dir(tau_1) * tau_1.
    """
    g = 2.0 * taus * dirs
    if not include_zero_node:
        return float(_trapz(g, taus))
    if taus.shape[0] >= 2:
        g0 = g[0] - taus[0] * (g[1] - g[0]) / (taus[1] - taus[0])
    else:
        g0 = 0.0
    nodes = np.concatenate(([0.0], taus))
    vals = np.concatenate(([g0], g))
    return float(_trapz(vals, nodes))


def weighted_dir_integral(cost: CostFunction, theta, eta: float,
                          grid: QuadratureGrid | None = None,
                          include_zero_node: bool = True) -> float:
    """Quadrature of 2 * integral_0^1 tau * dir_{eta*tau*grad}(theta) dtau.

    ``include_zero_node=False`` drops the extrapolated tau=0 node; it exists
    for fault injection in the self-check command and for quadrature studies.
    """
    if grid is None:
        grid = QuadratureGrid.default()
    theta, _, g, _ = _gradient_above_floor(cost, theta)
    dirs = _dir_along(cost, theta, g, g, eta, grid.taus)
    return _weighted_integral(grid.taus, dirs, include_zero_node)


def verify_identity(cost: CostFunction, theta, eta: float,
                    grid: QuadratureGrid | None = None,
                    include_zero_node: bool = True) -> IdentityCheck:
    """Compare rp against -1 + (eta/2) * weighted dir integral."""
    lhs = relative_progress(cost, theta, eta)
    rhs = -1.0 + 0.5 * eta * weighted_dir_integral(cost, theta, eta, grid, include_zero_node)
    return IdentityCheck(lhs, rhs, abs(lhs - rhs))


def rp_approx_residual(cost: CostFunction, theta, eta: float) -> float:
    """|rp - (-1 + (eta/2) * dir at the full step)|.

    Small exactly when dir is nearly constant in tau; exact zero on quadratics.
    """
    theta, _, g, _ = _gradient_above_floor(cost, theta)
    rp = relative_progress(cost, theta, eta)
    dir_full = directional_smoothness(cost, theta, eta * g)
    return abs(rp - (-1.0 + 0.5 * eta * dir_full))


def tau_dir_stats(cost: CostFunction, theta, eta: float,
                  grid: QuadratureGrid | None = None):
    """Mean and standard deviation of dir_{eta*tau*grad}(theta) over the tau grid."""
    if grid is None:
        grid = QuadratureGrid.default()
    theta, _, g, _ = _gradient_above_floor(cost, theta)
    dirs = _dir_along(cost, theta, g, g, eta, grid.taus)
    return float(np.mean(dirs)), float(np.std(dirs))


# --- sharpness ---------------------------------------------------------------


def _phase1_magnitude(matvec, dim, tol, max_iter, rng):
    """Upper-converging estimate of the spectral radius |lambda|_max.

    Tracks ||H x_t|| for normalized iterates, which is robust even when the
    two extreme eigenvalues have equal magnitude and opposite sign.
    """
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    best = 0.0
    prev = math.inf
    for _ in range(max_iter):
        y = matvec(x)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            break
        best = max(best, ny)
        if abs(ny - prev) <= tol * (1.0 + ny):
            break
        prev = ny
        x = y / ny
    return best


def sharpness(cost: CostFunction, theta, tol: float = 1e-6,
              max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest Hessian eigenvalue at theta by two-phase matrix-free iteration.

    Phase 1 estimates the spectral radius s; phase 2 runs power iteration on
    H + (s+1) I, whose eigenvalues are all positive with the largest equal to
    lambda_max + s + 1, so the shift-back is exact even for indefinite H.
    Converged when successive Rayleigh quotients differ by <= tol * (1+|lam|).

    For costs that are not C^2 (relu networks) the Hessian-vector product is
    a finite-difference surrogate and the returned value inherits that status.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    theta = as_params(theta, cost.dimension)
    matvec = lambda v: cost.hvp(theta, v)
    rng = np.random.default_rng(np.uint64(seed))

    s = _phase1_magnitude(matvec, cost.dimension, tol, max_iter, rng)
    shift = s + 1.0

    x = rng.standard_normal(cost.dimension)
    x /= np.linalg.norm(x)
    lam_prev = math.inf
    lam = math.inf
    for _ in range(max_iter):
        y = matvec(x) + shift * x
        lam = float(x @ y) - shift
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return -shift  # x is an exact eigenvector of the shifted operator
        x = y / ny
        if abs(lam - lam_prev) <= tol * (1.0 + abs(lam)):
            return lam
        lam_prev = lam
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations", lam
    )


def segment_max_sharpness(cost: CostFunction, theta, eta: float, samples: int = 11,
                          tol: float = 1e-6, max_iter: int = 10_000, seed: int = 0) -> float:
    """Max sharpness over equally spaced points of [theta, theta - eta*grad].

    A sampled lower bound on the true segment supremum.
    """
    if samples < 2:
        raise ContractViolation("need samples >= 2")
    theta, _, g, _ = _gradient_above_floor(cost, theta)
    step = -eta * g
    best = -math.inf
    for i in range(samples):
        point = theta + (i / (samples - 1)) * step
        best = max(best, sharpness(cost, point, tol, max_iter, seed))
    return best


# --- stochastic relative progress --------------------------------------------


def _batch_gradients(cost, theta, batch_size, num_batches, rng, grad_sampler):
    """Gradient samples: minibatches drawn uniformly with replacement, so the
    sample mean is exactly unbiased for the full gradient. batch_size >= n
    degenerates to the deterministic full batch. A grad_sampler(rng) callable
    replaces minibatch sampling entirely (synthetic-noise studies)."""
    if grad_sampler is not None:
        return [as_params(grad_sampler(rng), cost.dimension) for _ in range(num_batches)]
    n = cost.num_examples
    if n is None:
        raise ContractViolation(
            f"cost kind {cost.kind!r} has no dataset; pass grad_sampler instead"
        )
    if batch_size < 1:
        raise ContractViolation("batch_size must be >= 1")
    out = []
    for _ in range(num_batches):
        if batch_size >= n:
            batch = np.arange(n)
        else:
            batch = rng.integers(0, n, size=batch_size)
        out.append(cost.stochastic_gradient(theta, batch))
    return out


def expected_rp(cost: CostFunction, theta, eta: float, batch_size: int,
                num_batches: int, seed: int, grad_sampler=None):
    """Monte Carlo estimate of (E f(theta - eta*g) - f(theta)) / (eta*||grad||^2).

    Returns (estimate, stderr). With batch_size >= n and num_batches=1 the
    sample is the deterministic full gradient and this equals
    relative_progress exactly (stderr 0).
    """
    if num_batches < 1:
        raise ContractViolation("num_batches must be >= 1")
    theta, loss, g, gnorm = _gradient_above_floor(cost, theta)
    rng = np.random.default_rng(np.uint64(seed))
    grads = _batch_gradients(cost, theta, batch_size, num_batches, rng, grad_sampler)
    vals = np.array([
        (cost.value(theta - eta * gb) - loss) / (eta * gnorm**2) for gb in grads
    ])
    est = float(np.mean(vals))
    err = 0.0 if num_batches == 1 else float(np.std(vals, ddof=1) / math.sqrt(num_batches))
    return est, err


def expected_rp_rhs(cost: CostFunction, theta, eta: float, batch_size: int,
                    num_batches: int, seed: int, grid: QuadratureGrid | None = None,
                    grad_sampler=None):
    """Monte Carlo estimate of -1 + (eta/2) * E[(||g||^2/||grad||^2) * dir_{eta*g}].

    Default is the single-tau (tau=1) form; passing a grid switches to the
    exact integral form 2 * integral tau * dir_{eta*tau*g} dtau per sample.
    Matching seeds with expected_rp draw identical batch sequences, so the
    two estimates are paired.
    """
    if num_batches < 1:
        raise ContractViolation("num_batches must be >= 1")
    theta, _, g, gnorm = _gradient_above_floor(cost, theta)
    rng = np.random.default_rng(np.uint64(seed))
    grads = _batch_gradients(cost, theta, batch_size, num_batches, rng, grad_sampler)
    weights = np.empty(num_batches)
    for i, gb in enumerate(grads):
        ratio = float(gb @ gb) / gnorm**2
        if grid is None:
            dir_b = directional_smoothness(cost, theta, eta * gb)
            weights[i] = ratio * dir_b
        else:
            dirs = _dir_along(cost, theta, g, gb, eta, grid.taus)
            weights[i] = ratio * _weighted_integral(grid.taus, dirs)
    est = -1.0 + 0.5 * eta * float(np.mean(weights))
    if num_batches == 1:
        err = 0.0
    else:
        err = 0.5 * eta * float(np.std(weights, ddof=1) / math.sqrt(num_batches))
    return est, err
