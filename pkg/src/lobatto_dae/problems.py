"""Test problems with reference solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dae import DAEProblem, SolverConfig, SystemState, consistent_lambda, integrate
from .tableau import lobatto_pair

Array = np.ndarray
REFERENCE_REFINEMENT = 64
REFERENCE_STAGES = 4


@dataclass(frozen=True)
class NonholonomicSystem:
    """Hamiltonian with linear velocity constraints ``mu(q) dH/dp = 0``.

    ``Hqp[i, k]`` is the mixed derivative d2H/dq_i dp_k and ``dmu[a, i, k]``
    is d mu_{a i} / d q_k.
    """

    n: int
    m: int
    H: Callable[[Array, Array], float]
    Hq: Callable[[Array, Array], Array]
    Hp: Callable[[Array, Array], Array]
    Hqq: Callable[[Array, Array], Array]
    Hqp: Callable[[Array, Array], Array]
    Hpp: Callable[[Array, Array], Array]
    mu: Callable[[Array], Array]
    dmu: Callable[[Array], Array]

    def to_problem(self, name: str, **extra) -> DAEProblem:
        Hq, Hp, Hqq, Hqp, Hpp, mu, dmu = self.Hq, self.Hp, self.Hqq, self.Hqp, self.Hpp, self.mu, self.dmu

        def g(q, p, lam):
            return -Hq(q, p) + mu(q).T @ lam

        def D1g(q, p, lam):
            return -Hqq(q, p) + np.einsum("a,aik->ik", lam, dmu(q))

        def D1phi(q, p):
            return np.einsum("aik,i->ak", dmu(q), Hp(q, p)) + mu(q) @ Hqp(q, p).T

        return DAEProblem(
            n=self.n,
            m=self.m,
            f=Hp,
            g=g,
            phi=lambda q, p: mu(q) @ Hp(q, p),
            D1f=lambda q, p: Hqp(q, p).T,
            D2f=Hpp,
            D1g=D1g,
            D2g=lambda q, p, lam: -Hqp(q, p),
            D3g=lambda q, p, lam: mu(q).T,
            D1phi=D1phi,
            D2phi=lambda q, p: mu(q) @ Hpp(q, p),
            name=name,
            hamiltonian=self.H,
            **extra,
        )


def _kinetic(n: int, potential_grad: Array | None = None, potential=None) -> dict:
    grad = np.zeros(n) if potential_grad is None else np.asarray(potential_grad, float)
    V = potential or (lambda q: float(grad @ q))
    return dict(
        H=lambda q, p: 0.5 * float(p @ p) + V(q),
        Hq=lambda q, p: grad.copy(),
        Hp=lambda q, p: np.array(p, float),
        Hqq=lambda q, p: np.zeros((n, n)),
        Hqp=lambda q, p: np.zeros((n, n)),
        Hpp=lambda q, p: np.eye(n),
    )


def particle_system() -> NonholonomicSystem:
    def mu(q):
        return np.array([[-q[1], 0.0, 1.0]])

    def dmu(q):
        d = np.zeros((1, 3, 3))
        d[0, 0, 1] = -1.0
        return d

    return NonholonomicSystem(n=3, m=1, mu=mu, dmu=dmu, **_kinetic(3))


def particle_exact(q0: Array, p0: Array) -> Callable[[float], tuple[Array, Array, Array]]:
    x0, y0, z0 = q0
    b = p0[1]
    if b == 0:
        raise ValueError("closed form needs p_y != 0")
    c = p0[0] * np.sqrt(1 + y0**2)

    def exact(t):
        y = y0 + b * t
        r = np.sqrt(1 + y**2)
        px = c / r
        x = x0 + (c / b) * (np.arcsinh(y) - np.arcsinh(y0))
        z = z0 + (c / b) * (r - np.sqrt(1 + y0**2))
        lam = b * px / (1 + y**2)
        return np.array([x, y, z]), np.array([px, b, y * px]), np.array([lam])

    return exact


def nonholonomic_particle(q0=(0.0, 0.0, 0.0), p0=(1.0, 1.0, 0.0)) -> DAEProblem:
    """Free particle with the constraint ``z' = y x'``."""
    q0 = np.asarray(q0, float)
    p0 = np.asarray(p0, float)
    exact = particle_exact(q0, p0)
    q, p, lam = exact(0.0)
    return particle_system().to_problem("particle", exact=exact, initial=SystemState(0.0, q, p, lam))


def manufactured_problem(omega: float = 1.0) -> DAEProblem:
    """Nonlinear problem with solution ``q = (sin wt, cos wt)``, ``lam = sin wt``.

    With ``kappa(q) = (q1 q2, q2^2) / 2`` and ``G(q) = (1 + q2^2, q1)``::

        f   = p - kappa(q)
        g   = -w^2 q + Dkappa(q) (p - kappa(q)) + G(q) (lam - q1)
        phi = p1 - w q2 - kappa_1(q)

    The momentum along the solution is ``p = q' + kappa(q)``.
    """
    if omega == 0:
        raise ValueError("omega must be nonzero")
    w = float(omega)

    def kappa(q):
        return np.array([0.5 * q[0] * q[1], 0.5 * q[1] ** 2])

    def Dkappa(q):
        return np.array([[0.5 * q[1], 0.5 * q[0]], [0.0, q[1]]])

    def G(q):
        return np.array([1.0 + q[1] ** 2, q[0]])

    def f(q, p):
        return p - kappa(q)

    def g(q, p, lam):
        return -(w**2) * q + Dkappa(q) @ (p - kappa(q)) + G(q) * (lam[0] - q[0])

    def phi(q, p):
        return np.array([p[0] - w * q[1] - kappa(q)[0]])

    def D1g(q, p, lam):
        v = p - kappa(q)
        K = Dkappa(q)
        dKv = np.array([[0.5 * v[1], 0.5 * v[0]], [0.0, v[1]]])
        dG = np.array([[0.0, 2.0 * q[1]], [1.0, 0.0]])
        return -(w**2) * np.eye(2) + dKv - K @ K + (lam[0] - q[0]) * dG - np.outer(G(q), [1.0, 0.0])

    def exact(t):
        q = np.array([np.sin(w * t), np.cos(w * t)])
        qd = np.array([w * np.cos(w * t), -w * np.sin(w * t)])
        return q, qd + kappa(q), np.array([np.sin(w * t)])

    q, p, lam = exact(0.0)
    return DAEProblem(
        n=2,
        m=1,
        f=f,
        g=g,
        phi=phi,
        D1f=lambda q, p: -Dkappa(q),
        D2f=lambda q, p: np.eye(2),
        D1g=D1g,
        D2g=lambda q, p, lam: Dkappa(q),
        D3g=lambda q, p, lam: G(q).reshape(2, 1),
        D1phi=lambda q, p: np.array([[-0.5 * q[1], -w - 0.5 * q[0]]]),
        D2phi=lambda q, p: np.array([[1.0, 0.0]]),
        name="manufactured",
        exact=exact,
        initial=SystemState(0.0, q, p, lam),
    )


def knife_edge(slope: float = 1.0, p0=(1.0, 0.0, 1.0)) -> DAEProblem:
    """Knife edge on an inclined plane, ``H = |p|^2 / 2 - slope * x``.

    The blade may not slip sideways: ``x' sin(theta) - y' cos(theta) = 0``.
    No closed form is attached; see :func:`fine_reference`.
    """

    def mu(q):
        return np.array([[np.sin(q[2]), -np.cos(q[2]), 0.0]])

    def dmu(q):
        d = np.zeros((1, 3, 3))
        d[0, 0, 2] = np.cos(q[2])
        d[0, 1, 2] = np.sin(q[2])
        return d

    system = NonholonomicSystem(n=3, m=1, mu=mu, dmu=dmu, **_kinetic(3, potential_grad=[-slope, 0.0, 0.0]))
    prob = system.to_problem("knife-edge")
    q0 = np.zeros(3)
    p0 = np.asarray(p0, float)
    lam0 = consistent_lambda(prob, q0, p0)
    return DAEProblem(**{**prob.__dict__, "initial": SystemState(0.0, q0, p0, lam0)})


def fine_reference(prob: DAEProblem, T: float, h_min: float, config: SolverConfig = SolverConfig()) -> SystemState:
    """Endpoint of a run with the s=4 scheme and step ``h_min / 64``."""
    h_ref = h_min / REFERENCE_REFINEMENT
    nsteps = int(round(T / h_ref))
    return integrate(prob, lobatto_pair(REFERENCE_STAGES), prob.initial, T / nsteps, nsteps, config)[-1]


PROBLEMS: dict[str, Callable[..., DAEProblem]] = {
    "particle": nonholonomic_particle,
    "manufactured": manufactured_problem,
    "knife-edge": knife_edge,
}


def get_problem(name: str, **params) -> DAEProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)


def exact_residual(prob: DAEProblem, t: float, dt: float = 1e-3) -> float:
    """Max DAE residual of the attached exact solution at ``t``.

    Time derivatives use a fourth-order central difference.
    """
    q, p, lam = prob.exact(t)
    qs = [prob.exact(t + k * dt) for k in (-2, -1, 1, 2)]

    def deriv(idx):
        a, b_, c, d = (x[idx] for x in qs)
        return (a - 8 * b_ + 8 * c - d) / (12 * dt)

    rq = deriv(0) - prob.f(q, p)
    rp = deriv(1) - prob.g(q, p, lam)
    rphi = prob.phi(q, p)
    return float(max(np.max(np.abs(rq)), np.max(np.abs(rp)), np.max(np.abs(rphi))))
