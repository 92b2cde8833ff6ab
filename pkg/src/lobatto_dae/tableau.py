"""Lobatto IIIA/IIIB coefficient pairs and checks of their algebraic properties.

Nodes come from bisection on the derivative of a Legendre polynomial, the
IIIA matrix from per-row Vandermonde solves of the collocation conditions,
and the IIIB matrix from the symplectic conjugacy relation.  Nothing is
hardcoded, so every check in this module is also a check of the construction.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConjugationError,
    HypothesisError,
    StabilitySingularityError,
    UnsupportedOrderError,
)

MIN_STAGES = 2
MAX_STAGES = 5
DEFAULT_TOL = 1e-12
CONDITION_THRESHOLD = 1e12


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (A, b, c) of an s-stage Runge-Kutta method."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = "tableau"

    def __post_init__(self):
        A, b, c = _readonly(self.A), _readonly(self.b), _readonly(self.c)
        s = b.size
        if A.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"inconsistent tableau shapes A{A.shape} b{b.shape} c{c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def s(self) -> int:
        return self.b.size

    @property
    def A_tilde(self) -> np.ndarray:
        """The lower-right block (a_ij)_{i,j>=2}."""
        return self.A[1:, 1:]

    def with_entry(self, i: int, j: int, delta: float) -> "ButcherTableau":
        """Copy with a_ij perturbed by delta (0-based indices); b and c untouched."""
        A = np.array(self.A)
        A[i, j] += delta
        return ButcherTableau(A, self.b, self.c, name=f"{self.name}+perturbed")


@dataclass(frozen=True)
class PartitionedTableau:
    """A compatible pair: the A-method (IIIA) and the A-hat method (IIIB)."""

    first: ButcherTableau
    second: ButcherTableau

    def __post_init__(self):
        if self.first.s != self.second.s:
            raise ValueError("both methods of a pair need the same number of stages")

    @property
    def s(self) -> int:
        return self.first.s

    @property
    def c(self) -> np.ndarray:
        return self.first.c

    @property
    def b(self) -> np.ndarray:
        return self.first.b

    @property
    def A(self) -> np.ndarray:
        return self.first.A

    @property
    def Ahat(self) -> np.ndarray:
        return self.second.A

    @property
    def bhat(self) -> np.ndarray:
        return self.second.b


@dataclass(frozen=True)
class ConditionReport:
    name: str
    order: int
    max_residual: float
    tol: float = DEFAULT_TOL
    s: int | None = None
    detail: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.max_residual <= self.tol))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        s = "" if self.s is None else f"s={self.s} "
        extra = f" ({self.detail})" if self.detail else ""
        return f"{verdict} {s}{self.name} order={self.order} residual={self.max_residual:.3e} tol={self.tol:.0e}{extra}"


# --------------------------------------------------------------------------
# construction


def _check_stages(s: int) -> None:
    if not isinstance(s, (int, np.integer)) or not MIN_STAGES <= s <= MAX_STAGES:
        raise UnsupportedOrderError(
            f"stage count must be an integer in [{MIN_STAGES}, {MAX_STAGES}], got {s!r}"
        )


def legendre_derivative(n: int, x: float) -> float:
    """P_n'(x) on [-1, 1] from the three-term recurrences."""
    if n == 0:
        return 0.0
    p_prev, p = 1.0, x
    dp_prev, dp = 0.0, 1.0
    for k in range(1, n):
        # P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp_prev, dp = dp, dp_prev + (2 * k + 1) * p
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return dp


def _bisect(fun, lo: float, hi: float) -> float:
    flo = fun(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fmid = fun(mid)
        if fmid == 0.0:
            return mid
        if (fmid < 0.0) == (flo < 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lobatto_nodes(s: int) -> np.ndarray:
    """Lobatto nodes on [0, 1]: the endpoints plus the roots of P'_{s-1}(2x - 1)."""
    _check_stages(s)
    n = s - 1
    grid = np.linspace(-1.0, 1.0, 400 * s + 1)[1:-1]
    vals = [legendre_derivative(n, x) for x in grid]
    roots = []
    for x0, x1, v0, v1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if v0 == 0.0:
            roots.append(x0)
        elif v0 * v1 < 0.0:
            roots.append(_bisect(lambda x: legendre_derivative(n, x), x0, x1))
    if len(roots) != s - 2:
        raise RuntimeError(f"found {len(roots)} interior nodes, expected {s - 2}")
    # symmetrize: x -> -x is an exact symmetry of the root set
    roots = np.array(roots)
    roots = 0.5 * (roots - roots[::-1])
    c = np.concatenate(([0.0], 0.5 * (1.0 + roots), [1.0]))
    return _readonly(c)


def _vandermonde(c: np.ndarray) -> np.ndarray:
    # row k holds c_j^k, k = 0..s-1
    s = c.size
    return np.vstack([c**k for k in range(s)])


def lobatto_iiia(s: int) -> ButcherTableau:
    """Lobatto IIIA: rows of A from C(s), weights from B(s)."""
    c = lobatto_nodes(s)
    V = _vandermonde(c)
    k = np.arange(1, s + 1)
    try:
        A = np.vstack([np.linalg.solve(V, c[i] ** k / k) for i in range(s)])
        b = np.linalg.solve(V, 1.0 / k)
    except np.linalg.LinAlgError as exc:  # distinct nodes make this unreachable
        raise RuntimeError("singular Vandermonde system") from exc
    # c_1 = 0 makes the first row vanish analytically
    A[0, :] = 0.0
    return ButcherTableau(A, b, c, name="lobatto-iiia")


def lobatto_iiib(iiia: ButcherTableau) -> ButcherTableau:
    """Symplectic conjugate: ahat_ij = b_j - (b_j / b_i) a_ji, bhat = b.

    The nodes are shared with the IIIA method.  For s >= 3 they coincide with
    the row sums of A-hat; for s = 2 the row sums are (1/2, 1/2).
    """
    b = iiia.b
    if np.any(b == 0.0):
        raise ConjugationError("symplectic conjugate undefined: some b_i = 0")
    Ahat = b[None, :] - (b[None, :] / b[:, None]) * iiia.A.T
    return ButcherTableau(Ahat, b, iiia.c, name="lobatto-iiib")


def lobatto_pair(s: int) -> PartitionedTableau:
    iiia = lobatto_iiia(s)
    return PartitionedTableau(iiia, lobatto_iiib(iiia))


# --------------------------------------------------------------------------
# simplifying assumptions

_CONDITION_ALIASES = {
    "B": "B",
    "C": "C",
    "D": "D",
    "Bhat": "Bhat",
    "B̂": "Bhat",
    "Chat": "Chat",
    "Ĉ": "Chat",
    "Dhat": "Dhat",
    "D̂": "Dhat",
    "CChat": "CChat",
    "CĈ": "CChat",
    "DDhat": "DDhat",
    "DD̂": "DDhat",
    "ChatC": "ChatC",
    "ĈC": "ChatC",
    "DhatD": "DhatD",
    "D̂D": "DhatD",
}

CONDITIONS = ("B", "C", "D", "Bhat", "Chat", "Dhat", "CChat", "DDhat", "ChatC", "DhatD")


def canonical_condition(which: str) -> str:
    try:
        return _CONDITION_ALIASES[which]
    except KeyError:
        raise ValueError(f"unknown simplifying assumption {which!r}") from None


def condition_residual(pair: PartitionedTableau, which: str, k: int) -> float:
    """Max absolute residual of one simplifying assumption at a single k."""
    which = canonical_condition(which)
    hat = which in ("Bhat", "Chat", "Dhat")
    t = pair.second if hat else pair.first
    A, b, c = t.A, t.b, t.c
    if which in ("B", "Bhat"):
        return abs(b @ c ** (k - 1) - 1.0 / k)
    if which in ("C", "Chat"):
        return float(np.max(np.abs(A @ c ** (k - 1) - c**k / k)))
    if which in ("D", "Dhat"):
        return float(np.max(np.abs((b * c ** (k - 1)) @ A - b * (1.0 - c**k) / k)))

    # coupled conditions need k >= 2
    A, Ah, b, bh, c = pair.A, pair.Ahat, pair.b, pair.bhat, pair.c
    if which == "CChat":
        return float(np.max(np.abs(A @ (Ah @ c ** (k - 2)) - c**k / (k * (k - 1)))))
    if which == "ChatC":
        return float(np.max(np.abs(Ah @ (A @ c ** (k - 2)) - c**k / (k * (k - 1)))))
    tail = ((k - 1) - (k * c - c**k)) / (k * (k - 1))
    if which == "DDhat":
        return float(np.max(np.abs(((b * c ** (k - 2)) @ A) @ Ah - b * tail)))
    # DhatD
    return float(np.max(np.abs(((bh * c ** (k - 2)) @ Ah) @ A - bh * tail)))


def _first_k(which: str) -> int:
    return 2 if canonical_condition(which) in ("CChat", "DDhat", "ChatC", "DhatD") else 1


def check_simplifying(
    pair: PartitionedTableau, which: str, k_max: int, tol: float = DEFAULT_TOL
) -> ConditionReport:
    """Evaluate a simplifying assumption for every k up to k_max.

    An order below the first admissible k (e.g. D(0)) is vacuous and reports
    a zero residual.
    """
    name = canonical_condition(which)
    ks = range(_first_k(name), k_max + 1)
    residual = max((condition_residual(pair, name, k) for k in ks), default=0.0)
    return ConditionReport(f"{name}({k_max})", k_max, float(residual), tol, s=pair.s)


def condition_order(pair: PartitionedTableau, which: str, tol: float = DEFAULT_TOL, k_cap: int | None = None) -> int:
    """Largest k such that the condition holds for all admissible k' <= k."""
    name = canonical_condition(which)
    k_cap = k_cap if k_cap is not None else 2 * pair.s + 2
    order = _first_k(name) - 1
    for k in range(_first_k(name), k_cap + 1):
        if condition_residual(pair, name, k) > tol:
            break
        order = k
    return order


def lobatto_condition_orders(s: int) -> dict[str, int]:
    """Orders the Lobatto IIIA-IIIB family is known to satisfy."""
    return {
        "B": 2 * s - 2,
        "C": s,
        "D": s - 2,
        "Bhat": 2 * s - 2,
        "Chat": s - 2,
        "Dhat": s,
        "CChat": s,
        "DDhat": s,
        "ChatC": s - 2,
        "DhatD": s - 2,
    }


# --------------------------------------------------------------------------
# structural hypotheses


def condition_number(M: np.ndarray) -> float:
    if M.size == 0:
        return 1.0
    with np.errstate(all="ignore"):
        k = np.linalg.cond(M)
    return float(k) if np.isfinite(k) else math.inf


def check_hypotheses(pair: PartitionedTableau, tol: float = DEFAULT_TOL) -> list[ConditionReport]:
    """H1-H3 for the A-method, H1'-H2' for the A-hat method, plus consistency."""
    A, Ah, b, bh, c = pair.A, pair.Ahat, pair.b, pair.bhat, pair.c
    s = pair.s
    cond = condition_number(pair.first.A_tilde)
    reports = [
        ConditionReport("rowsum(A)", 0, float(np.max(np.abs(A.sum(axis=1) - c))), tol, s),
        ConditionReport("sum(b)=1", 0, abs(b.sum() - 1.0), tol, s),
        ConditionReport("H1", 0, float(np.max(np.abs(A[0, :]))), tol, s),
        # H2 is reported as pass/fail on the condition number of A-tilde
        ConditionReport(
            "H2",
            0,
            0.0 if cond < CONDITION_THRESHOLD else math.inf,
            tol,
            s,
            detail=f"cond(A~)={cond:.3e}",
        ),
        ConditionReport("H3", 0, float(np.max(np.abs(A[s - 1, :] - b))), tol, s),
        ConditionReport("H1'", 0, float(np.max(np.abs(Ah[:, s - 1]))), tol, s),
        ConditionReport("H2'", 0, float(np.max(np.abs(Ah[:, 0] - bh[0]))), tol, s),
        ConditionReport("compat(chat=c)", 0, float(np.max(np.abs(pair.second.c - c))), tol, s),
        ConditionReport("bhat=b", 0, float(np.max(np.abs(bh - b))), tol, s),
    ]
    return reports


def check_conjugacy(pair: PartitionedTableau, tol: float = DEFAULT_TOL) -> ConditionReport:
    A, Ah, b, bh = pair.A, pair.Ahat, pair.b, pair.bhat
    M = b[:, None] * Ah + bh[None, :] * A.T - b[:, None] * bh[None, :]
    residual = max(float(np.max(np.abs(M))), float(np.max(np.abs(b - bh))))
    return ConditionReport("conjugacy", 0, residual, tol, s=pair.s)


# --------------------------------------------------------------------------
# stability function


def stability_function(t: ButcherTableau, z: complex, tol: float = 1e-12) -> complex:
    """R(z) = 1 + z b (Id - zA)^{-1} 1, cross-checked against e_s^T (Id - zA)^{-1} 1
    when the tableau is stiffly accurate."""
    s = t.s
    M = np.eye(s) - z * t.A
    if condition_number(M) > 1e14:
        raise StabilitySingularityError(z)
    try:
        x = np.linalg.solve(M.astype(complex), np.ones(s, dtype=complex))
    except np.linalg.LinAlgError:
        raise StabilitySingularityError(z) from None
    r = 1.0 + z * (t.b @ x)
    if np.max(np.abs(t.A[-1] - t.b)) <= tol:
        r_alt = x[-1]
        scale = max(1.0, abs(r))
        if abs(r - r_alt) > 1e-8 * scale:
            raise AssertionError(f"stability formulas disagree at z={z}: {r} vs {r_alt}")
    return complex(r)


def stability_function_stiff(t: ButcherTableau, z: complex) -> complex:
    """The stiffly accurate form e_s^T (Id - zA)^{-1} 1 (requires a_sj = b_j)."""
    s = t.s
    M = np.eye(s) - z * t.A
    try:
        x = np.linalg.solve(M.astype(complex), np.ones(s, dtype=complex))
    except np.linalg.LinAlgError:
        raise StabilitySingularityError(z) from None
    return complex(x[-1])


def stability_at_infinity(t: ButcherTableau) -> float:
    """lim R(z) for |z| -> inf under H1-H3: 1 - e^T A~^{-1} c~.

    Block elimination of the first (zero) row of A leaves
    x~ = (Id - zA~)^{-1} (1 + z a~_1), whose limit is -A~^{-1} a~_1; the row
    sums a~_1 + A~ 1 = c~ turn this into the stated form.
    """
    At = t.A_tilde
    if np.max(np.abs(t.A[0])) > DEFAULT_TOL:
        raise HypothesisError("stability_at_infinity requires H1 (first row of A zero)")
    if condition_number(At) >= CONDITION_THRESHOLD:
        raise HypothesisError("A-tilde is singular; H2 violated")
    return float(1.0 - np.linalg.solve(At, t.c[1:])[-1])


# --------------------------------------------------------------------------
# plain-text export/import

_HEADER = re.compile(r"^#\s*(\S+)\s+s=(\d+)\s*$")



def format_tableau(t: ButcherTableau, name: str | None = None) -> str:
    """Row-major text block: header, s rows of A, then b, then c."""
    name = name or t.name
    lines = [f"# {name} s={t.s}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in t.A]
    lines.append(" ".join(f"{x:.17g}" for x in t.b))
    lines.append(" ".join(f"{x:.17g}" for x in t.c))
    return "\n".join(lines) + "\n"


def format_pair(pair: PartitionedTableau) -> str:
    return format_tableau(pair.first) + "\n" + format_tableau(pair.second)


def parse_tableaux(text: str) -> dict[str, ButcherTableau]:
    """Inverse of format_tableau for one or more concatenated blocks."""
    out: dict[str, ButcherTableau] = {}
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    i = 0
    while i < len(lines):
        m = _HEADER.match(lines[i])
        if not m:
            raise ValueError(f"expected '# name s=<k>' header, got {lines[i]!r}")
        name, s = m.group(1), int(m.group(2))
        rows = [[float(x) for x in ln.split()] for ln in lines[i + 1 : i + 3 + s]]
        if len(rows) != s + 2 or any(len(r) != s for r in rows):
            raise ValueError(f"malformed block for {name}")
        out[name] = ButcherTableau(np.array(rows[:s]), np.array(rows[s]), np.array(rows[s + 1]), name=name)
        i += s + 3
    return out
