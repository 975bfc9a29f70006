"""Equivalent network, rank-one spectral approximation and Carleman linearization.

The SI system is rewritten as ``dI/dt = lam (A I - B (I kron I))`` where
``A = At - (gamma / lam) Id`` and ``At`` is the rank-one equivalent adjacency.
Kronecker powers use the flat class order lexicographically, so entry
``(k1, k2)`` of ``I kron I`` sits at position ``k1 * n + k2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import epidemic
from .model import ModelConfig, SolverError, check_state

log = logging.getLogger(__name__)

MEMORY_BUDGET = 10**7
BLOWUP = 10.0


@dataclass(frozen=True)
class EquivalentNetwork:
    A_tilde: np.ndarray
    A: np.ndarray
    right: np.ndarray  # d (1 - s) per class
    left: np.ndarray  # d x / dbar per class


def equivalent_adjacency(x: np.ndarray, config: ModelConfig) -> EquivalentNetwork:
    x = check_state(x, config)
    right = config.class_degree * (1.0 - config.class_strategy)
    left = config.class_degree * x / config.mean_degree
    At = np.outer(right, left)
    return EquivalentNetwork(At, At - (config.gamma / config.lam) * np.eye(config.n), right, left)


def numeric_rank(M: np.ndarray, tol: float = 1e-12) -> int:
    return int(np.sum(np.linalg.svd(M, compute_uv=False) > tol))


@dataclass(frozen=True)
class Eigenpair:
    kappa_tilde: float
    kappa: float
    vector: np.ndarray
    residual: float
    power_estimate: float


def power_iteration(M: np.ndarray, iters: int = 500, tol: float = 1e-13) -> float:
    """Dominant eigenvalue of a nonnegative matrix by power iteration."""
    v = np.ones(M.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new = float(v @ w) / float(v @ v)
        v = w / norm
        if abs(new - lam) < tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def dominant_eigenpair(net: EquivalentNetwork, config: ModelConfig) -> Eigenpair:
    """Closed-form dominant eigenpair of ``A`` with residual and power-iteration check."""
    kt = float(net.left @ net.right)
    kappa = kt - config.gamma / config.lam
    v = net.right.copy()
    residual = float(np.max(np.abs(net.A @ v - kappa * v)))
    shift = config.gamma / config.lam
    estimate = power_iteration(net.A + shift * np.eye(len(v))) - shift
    return Eigenpair(kt, kappa, v, residual, estimate)


@dataclass
class ApproxTrajectory:
    t: np.ndarray
    I: np.ndarray
    alpha0: float
    kappa: float


def exponential_approx(
    I0: np.ndarray, x: np.ndarray, config: ModelConfig, grid: np.ndarray
) -> ApproxTrajectory:
    """Dominant-mode solution ``alpha_1(0) exp(lam kappa_1 t) v_1``.

    ``alpha_1(0)`` is the oblique projection of ``I0`` along the left
    eigenvector of the rank-one adjacency; the other modes decay at rate
    ``gamma`` and are dropped.
    """
    net = equivalent_adjacency(x, config)
    pair = dominant_eigenpair(net, config)
    I0 = np.asarray(I0, dtype=float)
    denom = float(net.left @ pair.vector)
    if denom == 0.0:
        raise SolverError("left and right dominant eigenvectors are orthogonal")
    alpha = float(net.left @ I0) / denom
    t = np.asarray(grid, dtype=float)
    I = alpha * np.exp(config.lam * pair.kappa * t)[:, None] * pair.vector[None, :]
    return ApproxTrajectory(t, I, alpha, pair.kappa)


def approx_payoff_gradient(
    x: np.ndarray, alpha0: float, t: float, config: ModelConfig
) -> np.ndarray:
    """Early-epidemic payoff Jacobian from the dominant mode, ``alpha0`` held fixed.

    ``dF_i/dx_j = -alpha0 lam t exp(lam kappa_1 t) d_i (1 - s_i)^2 d_j^2 (1 - s_j) / dbar``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not alpha0 > 0:
        raise ValueError("alpha0 must be positive")
    net = equivalent_adjacency(x, config)
    kappa = float(net.left @ net.right) - config.gamma / config.lam
    one_minus_s = 1.0 - config.class_strategy
    deg = config.class_degree
    scale = alpha0 * config.lam * t * math.exp(config.lam * kappa * t) / config.mean_degree
    return -scale * np.outer(deg * one_minus_s**2, deg**2 * one_minus_s)


# --------------------------------------------------------------------------- Carleman


@dataclass
class CarlemanSystem:
    order: int
    n: int
    lam: float
    A_blocks: list[sparse.csr_matrix]
    B_blocks: list[sparse.csr_matrix]
    matrix: sparse.csr_matrix

    @property
    def sizes(self) -> list[int]:
        return [self.n**k for k in range(1, self.order + 1)]

    @property
    def offsets(self) -> list[int]:
        return [int(o) for o in np.cumsum([0] + self.sizes[:-1])]

    def lift(self, I: np.ndarray) -> np.ndarray:
        """Stacked Kronecker powers ``(I, I^2, ..., I^C)``."""
        parts = [np.asarray(I, dtype=float)]
        for _ in range(1, self.order):
            parts.append(np.kron(parts[-1], parts[0]))
        return np.concatenate(parts)


def quadratic_operator(net: EquivalentNetwork) -> sparse.csr_matrix:
    """``B`` with ``B[k, k' n + k] = At[k, k']`` so that ``B (I kron I) = I * (At I)``."""
    n = net.A_tilde.shape[0]
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    data = net.A_tilde[rows, cols].ravel()
    return sparse.csr_matrix((data, (rows.ravel(), (cols * n + rows).ravel())), shape=(n, n * n))


def carleman_build(
    x: np.ndarray, config: ModelConfig, order: int = 3, memory_budget: int = MEMORY_BUDGET
) -> CarlemanSystem:
    """Truncated order-``order`` Carleman system.

    Raises:
        SolverError: if ``n**(order + 1)`` exceeds ``memory_budget``.
    """
    if order < 1:
        raise ValueError("Carleman order must be at least 1")
    n = config.n
    if n ** (order + 1) > memory_budget:
        raise SolverError(f"n^(C+1) = {n ** (order + 1)} exceeds the memory budget {memory_budget}")
    net = equivalent_adjacency(x, config)
    A = sparse.csr_matrix(net.A)
    B = quadratic_operator(net)
    eye_n = sparse.identity(n, format="csr")
    A_blocks, B_blocks = [A], [B]
    for k in range(2, order + 1):
        eye_prev = sparse.identity(n ** (k - 1), format="csr")
        A_blocks.append((sparse.kron(A, eye_prev) + sparse.kron(eye_n, A_blocks[-1])).tocsr())
        if k < order:
            # the top block's B would couple to the dropped order, so it is never built
            B_blocks.append((sparse.kron(B, eye_prev) + sparse.kron(eye_n, B_blocks[-1])).tocsr())
    grid = [[None] * order for _ in range(order)]
    for k in range(order):
        grid[k][k] = A_blocks[k]
        if k + 1 < order:
            grid[k][k + 1] = -B_blocks[k]
    matrix = (config.lam * sparse.bmat(grid, format="csr")).tocsr()
    return CarlemanSystem(order, n, config.lam, A_blocks, B_blocks, matrix)


def kronecker_sum_spectrum(eigs: np.ndarray, order: int) -> np.ndarray:
    """All ``order``-fold sums of ``eigs`` (with repetition, ordered tuples)."""
    out = np.array([0.0 + 0.0j])
    for _ in range(order):
        out = (out[:, None] + np.asarray(eigs)[None, :]).ravel()
    return out


@dataclass
class CarlemanTrajectory:
    t: np.ndarray
    I: np.ndarray
    resets: int


def carleman_integrate(
    I0: np.ndarray,
    system: CarlemanSystem,
    horizon: float,
    step: float = 1e-3,
    reset_period: float | None = 0.1,
) -> CarlemanTrajectory:
    """Fixed-step RK4 on the truncated linear system with periodic resets.

    At each reset the higher blocks are overwritten with Kronecker powers of
    the current base block. ``reset_period=None`` disables resets.

    Raises:
        SolverError: if any extended-state entry exceeds 10 in magnitude.
    """
    if not step > 0 or not horizon > 0:
        raise ValueError("step and horizon must be positive")
    if reset_period is not None and reset_period < step:
        raise ValueError("reset_period must be at least the step")
    I0 = np.asarray(I0, dtype=float)
    if I0.shape != (system.n,) or np.any(I0 < 0) or np.any(I0 > 1):
        raise ValueError("I0 must be a vector in [0, 1]^n")
    M = system.matrix
    n_steps = max(1, math.ceil(horizon / step - 1e-12))
    h = horizon / n_steps
    every = None if reset_period is None else max(1, int(round(reset_period / h)))
    z = system.lift(I0)
    n = system.n
    out = np.empty((n_steps + 1, n))
    out[0] = I0
    resets = 0

    def f(y):
        return M @ y

    for k in range(1, n_steps + 1):
        z = epidemic.rk4_step(f, z, h)
        if system.order > 1:
            worst = float(np.max(np.abs(z[n:])))
            if not worst <= BLOWUP:
                raise SolverError(
                    f"Carleman extended state blew up at t={k * h:.4g} (max |entry| {worst:.3g});"
                    " shorten the reset period or lower the order"
                )
        if every is not None and k % every == 0 and system.order > 1:
            z = system.lift(z[:n])
            resets += 1
        out[k] = z[:n]
    return CarlemanTrajectory(np.arange(n_steps + 1) * h, out, resets)


def export_equivalent_network(
    x: np.ndarray, config: ModelConfig, threshold: float = 1e-9
) -> list[tuple[str, str, float]]:
    """Weighted directed edges ``(src, dst, At[src, dst])`` above ``threshold``.

    Labels are ``"<degree>:<strategy>"`` with one-based strategy numbers.
    """
    At = equivalent_adjacency(x, config).A_tilde
    labels = [lab.replace("_", ":") for lab in config.index.labels(config.degrees)]
    edges = []
    for a, b in zip(*np.nonzero(At > threshold)):
        edges.append((labels[a], labels[b], float(At[a, b])))
    return edges
