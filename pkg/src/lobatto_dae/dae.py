"""Partitioned index-2 DAE integrator built on a Lobatto IIIA-IIIB pair.

The system is ``q' = f(q, p)``, ``p' = g(q, p, lam)``, ``0 = phi(q, p)``.
One step solves for the stages

    Q_i = q0 + h sum_j a_ij V_j          (i = 2..s, Q_1 = q0)
    P_i = p0 + h sum_j ahat_ij W_j       (i = 1..s)
    0   = phi(Q_i, p_i),  p_i = p0 + h sum_j a_ij W_j   (i = 2..s)

with ``V_j = f(Q_j, P_j)``, ``W_j = g(Q_j, P_j, Lam_j)`` and ``Lam_1 = lam0``.
The update is ``q1 = Q_s``, ``p1 = p_s``, ``lam1 = Lam_s``.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    HypothesisError,
    IndexViolationError,
    LayoutError,
    NonconvergenceError,
    SingularIterationMatrixError,
)
from .tableau import CONDITION_THRESHOLD, PartitionedTableau, condition_number

Array = np.ndarray
LAYOUTS = ("proposed", "naive")
SINGULAR_PIVOT_RATIO = 1e-14
STAGNATION_RATE = 0.5
ROUNDOFF_FACTOR = 64
H3_TOL = 1e-12


@dataclass(frozen=True)
class DAEProblem:
    """A partitioned DAE with analytic partial derivatives.

    ``exact`` maps ``t`` to ``(q, p, lam)`` when a reference solution is known.
    """

    n: int
    m: int
    f: Callable[[Array, Array], Array]
    g: Callable[[Array, Array, Array], Array]
    phi: Callable[[Array, Array], Array]
    D1f: Callable[[Array, Array], Array]
    D2f: Callable[[Array, Array], Array]
    D1g: Callable[[Array, Array, Array], Array]
    D2g: Callable[[Array, Array, Array], Array]
    D3g: Callable[[Array, Array, Array], Array]
    D1phi: Callable[[Array, Array], Array]
    D2phi: Callable[[Array, Array], Array]
    name: str = "problem"
    exact: Optional[Callable[[float], tuple[Array, Array, Array]]] = None
    initial: Optional["SystemState"] = None
    hamiltonian: Optional[Callable[[Array, Array], float]] = None

    def hidden_constraint(self, q: Array, p: Array, lam: Array) -> Array:
        return self.D1phi(q, p) @ self.f(q, p) + self.D2phi(q, p) @ self.g(q, p, lam)

    def index_matrix(self, q: Array, p: Array, lam: Array) -> Array:
        return self.D2phi(q, p) @ self.D3g(q, p, lam)


@dataclass(frozen=True)
class SystemState:
    t: float
    q: Array
    p: Array
    lam: Array
    newton_iters: int = 0

    def __post_init__(self):
        for name in ("q", "p", "lam"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).copy())


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 25
    jacobian: str = "analytic"
    newton: str = "simplified"
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.newton not in ("simplified", "full"):
            raise ValueError(f"unknown newton mode {self.newton!r}")


@dataclass
class StageSolution:
    Q: Array
    P: Array
    Lam: Array
    p_stage: Array
    W: Array
    iterations: int
    residuals: list[float] = field(default_factory=list)


def consistent_lambda(
    prob: DAEProblem, q: Array, p: Array, guess: Optional[Array] = None, config: SolverConfig = SolverConfig()
) -> Array:
    """Multiplier satisfying the hidden constraint ``D1phi f + D2phi g = 0``."""
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    lam = np.zeros(prob.m) if guess is None else np.array(guess, float)
    res = prob.hidden_constraint(q, p, lam)
    history = [float(np.max(np.abs(res)))]
    for _ in range(config.max_iter):
        M = prob.index_matrix(q, p, lam)
        if condition_number(M) > CONDITION_THRESHOLD:
            raise IndexViolationError(f"D2phi.D3g is singular (cond={condition_number(M):.3g})")
        if history[-1] <= config.tol:
            return lam
        lam = lam - np.linalg.solve(M, res)
        res = prob.hidden_constraint(q, p, lam)
        history.append(float(np.max(np.abs(res))))
    if history[-1] <= config.tol:
        return lam
    raise NonconvergenceError(
        f"hidden constraint residual {history[-1]:.3g} after {config.max_iter} iterations", history
    )


def unknown_count(prob: DAEProblem, s: int) -> int:
    return prob.n * (s - 1) + prob.n * s + prob.m * (s - 1)


def _split(prob: DAEProblem, s: int, state0: SystemState, x: Array) -> tuple[Array, Array, Array]:
    n, m = prob.n, prob.m
    x = np.asarray(x, float)
    if x.shape != (unknown_count(prob, s),):
        raise LayoutError(f"expected {unknown_count(prob, s)} unknowns, got shape {x.shape}")
    nq = n * (s - 1)
    Q = np.vstack([state0.q, x[:nq].reshape(s - 1, n)])
    P = x[nq : nq + n * s].reshape(s, n)
    Lam = np.vstack([state0.lam.reshape(1, m), x[nq + n * s :].reshape(s - 1, m)])
    return Q, P, Lam


def pack(Q: Array, P: Array, Lam: Array) -> Array:
    """Inverse of the unknown layout; the pinned first Q and Lam rows are dropped."""
    return np.concatenate([np.asarray(Q)[1:].ravel(), np.asarray(P).ravel(), np.asarray(Lam)[1:].ravel()])


def predictor(prob: DAEProblem, s: int, state0: SystemState) -> Array:
    return pack(np.tile(state0.q, (s, 1)), np.tile(state0.p, (s, 1)), np.tile(state0.lam, (s, 1)))


def _constraint_scale(h: float) -> float:
    return 1.0 / h if h else 1.0


def _check_layout(layout: str) -> None:
    if layout not in LAYOUTS:
        raise LayoutError(f"unknown layout {layout!r}")


def assemble_residual(
    prob: DAEProblem, pair: PartitionedTableau, state0: SystemState, h: float, x: Array, layout: str = "proposed"
) -> Array:
    """Stage residual ordered as (Q_2..Q_s, P_1..P_s, phi_2..phi_s).

    Constraint rows are divided by ``h`` so that the multiplier columns of the
    iteration matrix stay O(1) as ``h -> 0``. ``layout="naive"`` places the constraints on ``phi(Q_i, P_i)``; it exists
    only to expose the singular iteration matrix of that arrangement.
    """
    _check_layout(layout)
    s = pair.s
    A, Ahat = pair.A, pair.Ahat
    Q, P, Lam = _split(prob, s, state0, x)
    V = np.array([prob.f(Q[j], P[j]) for j in range(s)])
    W = np.array([prob.g(Q[j], P[j], Lam[j]) for j in range(s)])
    rQ = Q[1:] - state0.q - h * (A[1:] @ V)
    rP = P - state0.p - h * (Ahat @ W)
    if layout == "proposed":
        pst = state0.p + h * (A @ W)
        rphi = np.array([prob.phi(Q[i], pst[i]) for i in range(1, s)])
    else:
        rphi = np.array([prob.phi(Q[i], P[i]) for i in range(1, s)])
    return np.concatenate([rQ.ravel(), rP.ravel(), _constraint_scale(h) * rphi.ravel()])


def assemble_jacobian(
    prob: DAEProblem, pair: PartitionedTableau, state0: SystemState, h: float, x: Array, layout: str = "proposed"
) -> Array:
    """Analytic derivative of :func:`assemble_residual` with respect to the unknowns."""
    _check_layout(layout)
    s, n, m = pair.s, prob.n, prob.m
    A, Ahat = pair.A, pair.Ahat
    Q, P, Lam = _split(prob, s, state0, x)
    fq = [prob.D1f(Q[j], P[j]) for j in range(s)]
    fp = [prob.D2f(Q[j], P[j]) for j in range(s)]
    gq = [prob.D1g(Q[j], P[j], Lam[j]) for j in range(s)]
    gp = [prob.D2g(Q[j], P[j], Lam[j]) for j in range(s)]
    gl = [prob.D3g(Q[j], P[j], Lam[j]) for j in range(s)]
    W = np.array([prob.g(Q[j], P[j], Lam[j]) for j in range(s)])
    pst = state0.p + h * (A @ W)
    at = pst if layout == "proposed" else P

    N = unknown_count(prob, s)
    J = np.zeros((N, N))
    nq = n * (s - 1)
    npp = n * s

    def qcol(j):  # j >= 1 (0-based stage index)
        return slice((j - 1) * n, j * n)

    def pcol(j):
        return slice(nq + j * n, nq + (j + 1) * n)

    def lcol(j):  # j >= 1
        return slice(nq + npp + (j - 1) * m, nq + npp + j * m)

    eye = np.eye(n)
    for i in range(1, s):
        r = slice((i - 1) * n, i * n)
        for j in range(s):
            if j >= 1:
                J[r, qcol(j)] = (i == j) * eye - h * A[i, j] * fq[j]
            J[r, pcol(j)] = -h * A[i, j] * fp[j]
    for i in range(s):
        r = slice(nq + i * n, nq + (i + 1) * n)
        for j in range(s):
            if j >= 1:
                J[r, qcol(j)] = -h * Ahat[i, j] * gq[j]
                J[r, lcol(j)] = -h * Ahat[i, j] * gl[j]
            J[r, pcol(j)] = (i == j) * eye - h * Ahat[i, j] * gp[j]
    for i in range(1, s):
        r = slice(nq + npp + (i - 1) * m, nq + npp + i * m)
        phq = prob.D1phi(Q[i], at[i])
        php = prob.D2phi(Q[i], at[i])
        J[r, qcol(i)] += phq
        if layout == "proposed":
            for j in range(s):
                if j >= 1:
                    J[r, qcol(j)] += h * A[i, j] * (php @ gq[j])
                    J[r, lcol(j)] = h * A[i, j] * (php @ gl[j])
                J[r, pcol(j)] = h * A[i, j] * (php @ gp[j])
        else:
            J[r, pcol(i)] = php
    J[nq + npp :] *= _constraint_scale(h)
    return J


def fd_jacobian(prob, pair, state0, h, x, layout="proposed", step: float = 1e-7) -> Array:
    """Forward-difference Jacobian with step ``step * (1 + |x_j|)``."""
    x = np.asarray(x, float)
    r0 = assemble_residual(prob, pair, state0, h, x, layout)
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        dx = step * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += dx
        J[:, j] = (assemble_residual(prob, pair, state0, h, xp, layout) - r0) / dx
    return J


def constraint_block(prob: DAEProblem, pair: PartitionedTableau, state0: SystemState, layout: str) -> Array:
    """Leading-order coupling of the constraints to Lam_2..Lam_s at the predictor.

    For the proposed layout this is ``D2phi (A_tilde x I) D3g``; for the naive
    one the tilde block of ``Ahat`` takes its place.
    """
    s, m = pair.s, prob.m
    coef = pair.A if layout == "proposed" else pair.Ahat
    q0, p0, l0 = state0.q, state0.p, state0.lam
    M = prob.D2phi(q0, p0) @ prob.D3g(q0, p0, l0)
    B = np.zeros((m * (s - 1), m * (s - 1)))
    for i in range(1, s):
        for j in range(1, s):
            B[(i - 1) * m : i * m, (j - 1) * m : j * m] = coef[i, j] * M
    return B


def _factor(J: Array):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(J, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.max() == 0.0 or d.min() <= SINGULAR_PIVOT_RATIO * d.max():
        return None
    return lu, piv


def _singular_error(prob, pair, state0, layout, J) -> SingularIterationMatrixError:
    B = constraint_block(prob, pair, state0, layout)
    cb = condition_number(B)
    if cb > CONDITION_THRESHOLD:
        name = "D2phi (A_tilde x I) D3g" if layout == "proposed" else "D2phi (Ahat_tilde x I) D3g"
        return SingularIterationMatrixError(
            f"singular iteration matrix: block {name} has cond={cb:.3g}", block=name, condition=cb
        )
    cj = condition_number(J)
    return SingularIterationMatrixError(
        f"singular iteration matrix (cond={cj:.3g})", block="iteration matrix", condition=cj
    )


def _stagnated(history: list[float], x: Array, h: float) -> bool:
    """Residual stopped decreasing at the round-off level of the scaled rows."""
    if len(history) < 3 or history[-1] < STAGNATION_RATE * history[-2]:
        return False
    floor = ROUNDOFF_FACTOR * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x)))) * _constraint_scale(abs(h))
    return history[-1] <= floor


def newton_step_solve(
    prob: DAEProblem,
    pair: PartitionedTableau,
    state0: SystemState,
    h: float,
    config: SolverConfig = SolverConfig(),
    layout: str = "proposed",
) -> StageSolution:
    s = pair.s
    x = predictor(prob, s, state0)

    def jac(x):
        if config.jacobian == "analytic":
            return assemble_jacobian(prob, pair, state0, h, x, layout)
        return fd_jacobian(prob, pair, state0, h, x, layout, config.fd_step)

    r = assemble_residual(prob, pair, state0, h, x, layout)
    history = [float(np.max(np.abs(r)))]
    solves = 0
    factors = None
    while history[-1] > config.tol:
        if solves >= config.max_iter:
            raise NonconvergenceError(
                f"Newton residual {history[-1]:.3g} after {config.max_iter} iterations", history
            )
        if factors is None or config.newton == "full":
            J = jac(x)
            factors = _factor(J)
            if factors is None:
                raise _singular_error(prob, pair, state0, layout, J)
        x = x - scipy.linalg.lu_solve(factors, r, check_finite=False)
        r = assemble_residual(prob, pair, state0, h, x, layout)
        history.append(float(np.max(np.abs(r))))
        if not np.isfinite(history[-1]):
            raise NonconvergenceError("Newton iteration diverged", history)
        solves += 1
        if _stagnated(history, x, h):
            break
    Q, P, Lam = _split(prob, s, state0, x)
    W = np.array([prob.g(Q[j], P[j], Lam[j]) for j in range(s)])
    pst = state0.p + h * (pair.A @ W)
    return StageSolution(Q=Q, P=P, Lam=Lam, p_stage=pst, W=W, iterations=max(solves, 1), residuals=history)


def step(
    prob: DAEProblem, pair: PartitionedTableau, state0: SystemState, h: float, config: SolverConfig = SolverConfig()
) -> SystemState:
    sol = newton_step_solve(prob, pair, state0, h, config)
    p_s = sol.p_stage[-1]
    p1 = state0.p + h * (pair.b @ sol.W)
    gap = float(np.max(np.abs(p1 - p_s)))
    if gap > H3_TOL * max(1.0, float(np.max(np.abs(p_s)))):
        raise HypothesisError(f"p_s and the b-weighted update disagree by {gap:.3g}")
    q1, lam1 = sol.Q[-1], sol.Lam[-1]
    M = prob.index_matrix(q1, p_s, lam1)
    if condition_number(M) > CONDITION_THRESHOLD:
        raise IndexViolationError(f"D2phi.D3g is singular at t={state0.t + h!r}")
    return SystemState(state0.t + h, q1, p_s, lam1, newton_iters=sol.iterations)


def integrate(
    prob: DAEProblem,
    pair: PartitionedTableau,
    state0: SystemState,
    h: float,
    nsteps: int,
    config: SolverConfig = SolverConfig(),
) -> list[SystemState]:
    traj = [state0]
    cur = state0
    for k in range(nsteps):
        try:
            cur = step(prob, pair, cur, h, config)
        except (NonconvergenceError, SingularIterationMatrixError) as exc:
            exc.step_index = k
            exc.args = (f"step {k}: {exc.args[0]}",)
            raise
        traj.append(cur)
    return traj


def initial_state(prob: DAEProblem, t: float, q: Array, p: Array, guess=None, config=SolverConfig()) -> SystemState:
    """State with the multiplier made consistent through the hidden constraint."""
    lam = consistent_lambda(prob, q, p, guess, config)
    return SystemState(t, q, p, lam)


def phi_residual(prob: DAEProblem, state: SystemState) -> float:
    return float(np.max(np.abs(prob.phi(state.q, state.p)))) if prob.m else 0.0


def trajectory_csv(prob: DAEProblem, traj: list[SystemState]) -> str:
    cols = (
        ["t"]
        + [f"q{i}" for i in range(prob.n)]
        + [f"p{i}" for i in range(prob.n)]
        + [f"lambda{i}" for i in range(prob.m)]
        + ["phi_residual", "newton_iters"]
    )
    out = io.StringIO()
    out.write(",".join(cols) + "\n")
    for st in traj:
        vals = [st.t, *st.q, *st.p, *st.lam, phi_residual(prob, st)]
        out.write(",".join(f"{v:.17g}" for v in vals) + f",{st.newton_iters}\n")
    return out.getvalue()
