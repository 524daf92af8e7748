"""Instrumented, deterministic GD and SGD loops.

A trajectory halts with outcome ``diverged`` when the loss reaches the blowup
threshold or any evaluation goes non-finite, ``converged`` when the stop rule
fires (training accuracy for classifiers, otherwise the gradient falling
below the near-stationary floor), and ``budget_exhausted`` otherwise. Given
identical inputs, trajectories are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import metrics as M
from .costs import CostFunction, as_params
from .errors import ContractViolation

OUTCOME_CONVERGED = "converged"
OUTCOME_BUDGET = "budget_exhausted"
OUTCOME_DIVERGED = "diverged"

REGIME_STABLE = "stable"
REGIME_UNSTABLE = "unstable"
REGIME_DIVERGED = "diverged"


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float
    max_iter: int = 1000
    metric_cadence: Optional[int] = None  # None: 1 below dimension 1000, else 5
    stop_accuracy: Optional[float] = None
    blowup_threshold: float = 1e12
    seed: int = 0
    batch_size: Optional[int] = None  # None means full-batch GD

    def __post_init__(self):
        if self.eta <= 0:
            raise ContractViolation("eta must be positive")
        if self.max_iter < 1:
            raise ContractViolation("max_iter must be >= 1")
        if self.metric_cadence is not None and self.metric_cadence < 1:
            raise ContractViolation("metric_cadence must be >= 1")
        if self.stop_accuracy is not None and not (0.0 < self.stop_accuracy <= 1.0):
            raise ContractViolation("stop_accuracy must lie in (0, 1]")

    def cadence_for(self, cost: CostFunction) -> int:
        if self.metric_cadence is not None:
            return self.metric_cadence
        return 1 if cost.dimension < 1000 else 5


@dataclass(frozen=True)
class MetricFlags:
    """Which diagnostics to record at each cadence step."""

    rp: bool = True
    dir: bool = True
    sharpness: bool = False
    identity: bool = False
    tau_sweep: bool = False
    expected_rp: bool = False  # SGD epoch metric
    grid: Optional[M.QuadratureGrid] = None
    sharpness_tol: float = 1e-6
    sharpness_max_iter: int = 10_000
    expected_rp_batches: int = 64


@dataclass
class Trajectory:
    samples: List[M.MetricSample]
    final_theta: np.ndarray
    outcome: str
    iterates: Optional[list] = None  # populated when the caller asks to record them
    detail: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return self.samples[-1].loss if self.samples else math.nan


def _sample_at(cost, theta, t, loss, g, gnorm, eta, flags):
    sample = M.MetricSample(iteration=t, loss=loss, grad_norm=gnorm)
    defined = math.isfinite(loss) and gnorm >= M.grad_floor(loss) and math.isfinite(gnorm)
    if defined:
        step = eta * g
        if flags.rp:
            sample.rp = (cost.value(theta - step) - loss) / (eta * gnorm**2)
        if flags.dir:
            sample.dir = M.directional_smoothness(cost, theta, step)
        if flags.identity:
            check = M.verify_identity(cost, theta, eta, flags.grid)
            sample.identity_residual = check.residual
        if flags.tau_sweep:
            mean, std = M.tau_dir_stats(cost, theta, eta, flags.grid)
            sample.tau_dir_mean = mean
            sample.tau_dir_std = std
    if flags.sharpness and math.isfinite(loss):
        sample.sharpness = M.sharpness(
            cost, theta, flags.sharpness_tol, flags.sharpness_max_iter
        )
    return sample


def gd_run(cost: CostFunction, theta0, config: OptimizerConfig,
           flags: MetricFlags | None = None, record_iterates: bool = False) -> Trajectory:
    """Exact deterministic gradient descent with per-cadence instrumentation."""
    flags = flags or MetricFlags()
    theta = as_params(theta0, cost.dimension)
    cadence = config.cadence_for(cost)
    samples: list = []
    iterates = [] if record_iterates else None
    outcome = OUTCOME_BUDGET

    for t in range(config.max_iter + 1):
        loss = cost.value(theta)
        g = cost.gradient(theta)
        gnorm = float(np.linalg.norm(g))
        if record_iterates:
            iterates.append(theta.copy())

        at_cadence = t % cadence == 0
        blown = (not math.isfinite(loss)) or loss >= config.blowup_threshold \
            or not math.isfinite(gnorm)
        if blown:
            outcome = OUTCOME_DIVERGED
        elif config.stop_accuracy is not None and at_cadence and hasattr(cost, "accuracy") \
                and cost.accuracy(theta) >= config.stop_accuracy:
            outcome = OUTCOME_CONVERGED
        elif gnorm <= M.grad_floor(loss):
            outcome = OUTCOME_CONVERGED
        terminal = blown or outcome == OUTCOME_CONVERGED or t == config.max_iter

        if at_cadence or terminal:
            try:
                samples.append(_sample_at(cost, theta, t, loss, g, gnorm, config.eta, flags))
            except Exception as exc:
                raise RuntimeError(f"metric evaluation failed at iteration {t}") from exc
        if terminal:
            break
        theta = theta - config.eta * g

    return Trajectory(samples, theta, outcome, iterates)


def sgd_run(cost: CostFunction, theta0, config: OptimizerConfig,
            flags: MetricFlags | None = None, record_checkpoints: bool = False) -> Trajectory:
    """Epoch-shuffled minibatch SGD.

    max_iter counts epochs. Full-batch loss (and, when enabled, the expected
    relative progress estimate) is recorded at the end of every epoch; the rp
    field of those samples holds the Monte Carlo expected-rp estimate.
    batch_size = n skips shuffling so the run reduces bit-exactly to gd_run.
    """
    flags = flags or MetricFlags(dir=False)
    if config.batch_size is None:
        raise ContractViolation("sgd_run needs batch_size set")
    n = cost.num_examples
    if n is None:
        raise ContractViolation("sgd_run needs a dataset-backed cost")
    batch = min(config.batch_size, n)
    theta = as_params(theta0, cost.dimension)
    rng = np.random.default_rng(np.uint64(config.seed))
    samples: list = []
    checkpoints = [] if record_checkpoints else None
    outcome = OUTCOME_BUDGET
    step = 0

    def epoch_sample(t):
        loss = cost.value(theta)
        g = cost.gradient(theta)
        gnorm = float(np.linalg.norm(g))
        sample = M.MetricSample(iteration=t, loss=loss, grad_norm=gnorm)
        defined = math.isfinite(loss) and math.isfinite(gnorm) and gnorm >= M.grad_floor(loss)
        try:
            if defined and flags.expected_rp:
                est, _ = M.expected_rp(
                    cost, theta, config.eta, batch, flags.expected_rp_batches,
                    seed=rng.integers(0, 2**63),
                )
                sample.rp = est
            elif defined and flags.rp:
                sample.rp = M.relative_progress(cost, theta, config.eta)
            if defined and flags.dir:
                sample.dir = M.directional_smoothness(cost, theta, config.eta * g)
        except Exception as exc:
            raise RuntimeError(f"metric evaluation failed at iteration {t}") from exc
        return sample, loss, gnorm

    sample, loss, gnorm = epoch_sample(0)
    samples.append(sample)
    if record_checkpoints:
        checkpoints.append(theta.copy())

    for epoch in range(config.max_iter):
        if batch >= n:
            order = np.arange(n)
        else:
            order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            g = cost.stochastic_gradient(theta, idx)
            theta = theta - config.eta * g
            step += 1
            if not np.all(np.isfinite(theta)):
                outcome = OUTCOME_DIVERGED
                break
        sample, loss, gnorm = epoch_sample(step)
        samples.append(sample)
        if record_checkpoints:
            checkpoints.append(theta.copy())
        if outcome == OUTCOME_DIVERGED:
            break
        if not math.isfinite(loss) or loss >= config.blowup_threshold:
            outcome = OUTCOME_DIVERGED
            break
        if config.stop_accuracy is not None and hasattr(cost, "accuracy"):
            if cost.accuracy(theta) >= config.stop_accuracy:
                outcome = OUTCOME_CONVERGED
                break
        if gnorm <= M.grad_floor(loss):
            outcome = OUTCOME_CONVERGED
            break

    return Trajectory(samples, theta, outcome, checkpoints)


@dataclass(frozen=True)
class RegimeCall:
    regime: str
    reason: str
    thresholds: dict
    rp_defined: int
    frac_below_stable_cut: float
    frac_near_zero: float


def classify_regime(traj: Trajectory, eta: float, stable_rp_cut: float = -0.5,
                    near_zero_band: float = 0.25, stable_frac: float = 0.9,
                    unstable_frac: float = 0.5) -> RegimeCall:
    """Label a finished trajectory stable / unstable / diverged.

    Stable: >= stable_frac of defined rp samples below stable_rp_cut with
    non-increasing recorded loss. Unstable: net loss decrease with >=
    unstable_frac of rp samples inside (-near_zero_band, +near_zero_band).
    Anything else falls back to a majority vote on whether each rp sample
    sits closer to -1 (stable signature) or to 0 (unstable signature).
    """
    thresholds = {
        "stable_rp_cut": stable_rp_cut,
        "near_zero_band": near_zero_band,
        "stable_frac": stable_frac,
        "unstable_frac": unstable_frac,
    }
    if traj.outcome == OUTCOME_DIVERGED:
        return RegimeCall(REGIME_DIVERGED, "trajectory diverged", thresholds, 0, 0.0, 0.0)
    rps = np.array([s.rp for s in traj.samples if s.rp is not None])
    if rps.size < 10:
        raise ContractViolation(
            f"need >= 10 defined rp samples to classify, got {rps.size}"
        )
    losses = np.array([s.loss for s in traj.samples])
    frac_stable = float(np.mean(rps < stable_rp_cut))
    frac_zero = float(np.mean(np.abs(rps) < near_zero_band))
    loss_monotone = bool(np.all(np.diff(losses) <= 0.0))
    net_decrease = bool(losses[-1] < losses[0])

    if frac_stable >= stable_frac and loss_monotone:
        reason = (f"{frac_stable:.0%} of rp samples below {stable_rp_cut} "
                  "with non-increasing loss")
        return RegimeCall(REGIME_STABLE, reason, thresholds, rps.size, frac_stable, frac_zero)
    if net_decrease and frac_zero >= unstable_frac:
        reason = (f"net loss decrease with {frac_zero:.0%} of rp samples inside "
                  f"(-{near_zero_band}, {near_zero_band})")
        return RegimeCall(REGIME_UNSTABLE, reason, thresholds, rps.size, frac_stable, frac_zero)
    votes_stable = int(np.sum(np.abs(rps + 1.0) < np.abs(rps)))
    regime = REGIME_STABLE if votes_stable * 2 >= rps.size else REGIME_UNSTABLE
    reason = (f"majority sign-proximity fallback: {votes_stable}/{rps.size} "
              "samples closer to -1 than to 0")
    return RegimeCall(regime, reason, thresholds, rps.size, frac_stable, frac_zero)


@dataclass(frozen=True)
class EscapeResult:
    fraction: float
    max_iterate_norm: float
    final_distances: np.ndarray


def escape_experiment(cost: CostFunction, p, perturb_scale: float, eta: float,
                      iters: int, trials: int, seed: int) -> EscapeResult:
    """GD from random perturbations of a stationary point p.

    A trial escapes when its final distance to p exceeds 10x the perturbation
    scale; trajectories that blow up to non-finite iterates count as escaped
    at infinite distance. Also reports the largest iterate norm seen, so
    escape can be distinguished from divergence.
    """
    if perturb_scale <= 0 or trials < 1:
        raise ContractViolation("need perturb_scale > 0 and trials >= 1")
    p = as_params(p, cost.dimension)
    rng = np.random.default_rng(np.uint64(seed))
    distances = np.empty(trials)
    max_norm = 0.0
    for trial in range(trials):
        d = rng.standard_normal(cost.dimension)
        d *= perturb_scale / np.linalg.norm(d)
        theta = p + d
        for _ in range(iters):
            g = cost.gradient(theta)
            nxt = theta - eta * g
            if not np.all(np.isfinite(nxt)):
                theta = None
                break
            theta = nxt
            max_norm = max(max_norm, float(np.linalg.norm(theta)))
        distances[trial] = math.inf if theta is None else float(np.linalg.norm(theta - p))
    fraction = float(np.mean(distances > 10.0 * perturb_scale))
    return EscapeResult(fraction, max_norm, distances)
