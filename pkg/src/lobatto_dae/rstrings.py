"""R-string calculus: irreducibility, the eight string operations, elementary
strings, class closure and numerical evaluation of the matrix words R_gamma.

Positions are 1-based throughout, matching the usual way these strings are
written down.  An R-string of even dimension d maps to the matrix word

    C^g1 A^-1 C^g2 A C^g3 A^-1 C^g4 A ... A^-1 C^gd

(odd positions are followed by A^-1, even ones by A, the last entry by
nothing), which is the displayed product with the bracket taken over even i.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable, Iterator

import numpy as np

from .errors import HypothesisError, InapplicableOperationError

OPERATIONS = (
    "left_append",
    "right_append",
    "insert",
    "left_split",
    "right_split",
    "split",
    "cap",
    "left_diffuse",
    "right_diffuse",
)
# operations that stay inside a class (R_gamma unchanged)
CLASS_OPERATIONS = ("left_append", "right_append", "left_split", "right_split", "split", "insert")
# operations that generate new elementary strings
ELEMENTARY_OPERATIONS = ("cap", "left_diffuse", "right_diffuse")


@total_ordering
@dataclass(frozen=True)
class RString:
    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(x) for x in self.entries)
        if any(x < 0 for x in entries):
            raise ValueError(f"R-string entries must be nonnegative: {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, *entries: int) -> "RString":
        return cls(tuple(entries))

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __getitem__(self, i: int) -> int:
        # 1-based access
        if not 1 <= i <= self.dim:
            raise IndexError(i)
        return self.entries[i - 1]

    def __lt__(self, other: "RString") -> bool:
        return (self.dim, self.entries) < (other.dim, other.entries)

    def __str__(self) -> str:
        return "(" + ",".join(map(str, self.entries)) + ")"

    __repr__ = __str__


def parse_rstring(text: str) -> RString:
    return RString(tuple(int(x) for x in text.strip().strip("()").split(",") if x.strip()))


def is_irreducible(gamma: RString, parity: str = "even") -> bool:
    """No adjacent zero pair starting at an even (default) or odd position.

    The even convention is the one used for R-strings; the odd convention
    applies to the beta multi-indices of the inverse expansion.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    first = 2 if parity == "even" else 1
    d = gamma.dim
    g = gamma.entries
    for i in range(first, d, 2):
        if parity == "even" and not 1 < i < d:
            continue
        if g[i - 1] == 0 and g[i] == 0:
            return False
    return True


def _fail(op: str, reason: str) -> InapplicableOperationError:
    return InapplicableOperationError(f"{op} not applicable: {reason}")


def apply(gamma: RString, op: str, i: int | None = None, part: int | None = None) -> RString:
    """Apply one operation; position-dependent operations need a 1-based i.

    Side conditions (s = dim gamma):
      left_append    g_1 != 0
      right_append   g_s != 0
      insert         i odd, 3 <= i <= s-1, g_{i-1} != 0 != g_i; the zero pair
                     lands at positions i, i+1
      left_split     1 <= i <= s, g_i > 1  -> (..., 1, 0, g_i - 1, ...)
      right_split    1 <= i <= s, g_i > 1  -> (..., g_i - 1, 0, 1, ...)
      split          1 <= i <= s, 1 <= part < g_i -> (..., part, 0, g_i - part, ...);
                     part = 1 is left_split, part = g_i - 1 is right_split
      cap            g_1 != 0 != g_s
      left_diffuse   1 < i <= s, g_i >= 1  -> g_{i-1} + 1, g_i - 1
      right_diffuse  1 <= i < s, g_i >= 1 -> g_i - 1, g_{i+1} + 1
    Every result must be irreducible.
    """
    g = list(gamma.entries)
    s = len(g)
    if op not in OPERATIONS:
        raise ValueError(f"unknown operation {op!r}")
    if not is_irreducible(gamma):
        raise _fail(op, f"{gamma} is not irreducible")

    positional = op not in ("left_append", "right_append", "cap")
    if positional:
        if i is None:
            raise _fail(op, "a position i is required")
        if not 1 <= i <= s:
            raise _fail(op, f"position {i} outside 1..{s}")

    if op == "left_append":
        if g[0] == 0:
            raise _fail(op, "gamma_(1) == 0")
        out = [0, 0] + g
    elif op == "right_append":
        if g[-1] == 0:
            raise _fail(op, "gamma_(s) == 0")
        out = g + [0, 0]
    elif op == "insert":
        if i % 2 == 0 or not 3 <= i <= s - 1:
            raise _fail(op, f"insertion position must be odd with 3 <= i <= {s - 1}")
        if g[i - 2] == 0 or g[i - 1] == 0:
            raise _fail(op, "requires gamma_(i-1) != 0 != gamma_(i)")
        out = g[: i - 1] + [0, 0] + g[i - 1 :]
    elif op in ("left_split", "right_split"):
        if g[i - 1] <= 1:
            raise _fail(op, f"requires gamma_({i}) > 1")
        x = g[i - 1]
        mid = [1, 0, x - 1] if op == "left_split" else [x - 1, 0, 1]
        out = g[: i - 1] + mid + g[i:]
    elif op == "split":
        x = g[i - 1]
        if part is None or not 1 <= part < x:
            raise _fail(op, f"requires 1 <= part < gamma_({i}) = {x}")
        out = g[: i - 1] + [part, 0, x - part] + g[i:]
    elif op == "cap":
        if g[0] == 0 or g[-1] == 0:
            raise _fail(op, "requires gamma_(1) != 0 != gamma_(s)")
        out = [0] + g + [0]
    elif op == "left_diffuse":
        if not 1 < i <= s:
            raise _fail(op, f"requires 1 < i <= {s}")
        if g[i - 1] < 1:
            raise _fail(op, f"requires gamma_({i}) >= 1")
        out = list(g)
        out[i - 2] += 1
        out[i - 1] -= 1
    else:  # right_diffuse
        if not 1 <= i < s:
            raise _fail(op, f"requires 1 <= i < {s}")
        if g[i - 1] < 1:
            raise _fail(op, f"requires gamma_({i}) >= 1")
        out = list(g)
        out[i - 1] -= 1
        out[i] += 1

    result = RString(tuple(out))
    if not is_irreducible(result):
        raise _fail(op, f"result {result} is not irreducible")
    return result


def split(gamma: RString, i: int) -> list[RString]:
    """All ways of splitting entry i, i.e. every (.., a, 0, g_i - a, ..)."""
    out = []
    for a in range(1, gamma[i]):
        try:
            out.append(apply(gamma, "split", i, part=a))
        except InapplicableOperationError:
            continue
    return sorted(set(out))


def successors(gamma: RString, ops: Iterable[str] = OPERATIONS) -> Iterator[tuple[str, int | None, RString]]:
    """Every (op, i, result) for which the operation applies."""
    for op in ops:
        positions: Iterable[int | None]
        positions = [None] if op in ("left_append", "right_append", "cap") else range(1, gamma.dim + 1)
        for i in positions:
            if op == "split":
                # only the interior parts; the extremes are left/right splits
                for h in split(gamma, i):
                    if h.entries[i - 1] not in (1, gamma[i] - 1):
                        yield op, i, h
                continue
            try:
                yield op, i, apply(gamma, op, i)
            except InapplicableOperationError:
                continue


def irreducible_strings(order: int, dim: int) -> list[RString]:
    """All irreducible strings with the given order and dimension."""
    out = []
    for combo in itertools.combinations(range(order + dim - 1), dim - 1):
        # stars and bars
        parts, prev = [], -1
        for c in combo:
            parts.append(c - prev - 1)
            prev = c
        parts.append(order + dim - 2 - prev)
        g = RString(tuple(parts))
        if is_irreducible(g):
            out.append(g)
    return sorted(out)


def max_dim_for_order(n: int) -> int:
    # each of the dim/2 - 1 interior pairs carries at least one unit
    return 2 * n + 2


def enumerate_elementary(n: int) -> list[RString]:
    """Elementary strings of order n, sorted by (dim, entries).

    Seeds (k, n-k) are closed under capping and both diffusions; any string
    reachable from another irreducible string by appending, splitting or
    insertion is then discarded.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    seeds = [RString((k, n - k)) for k in range(n + 1)]
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        nxt = []
        for g in frontier:
            for _, _, h in successors(g, ELEMENTARY_OPERATIONS):
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt

    derivable = set()
    for d in range(2, max_dim_for_order(n) + 1, 2):
        for g in irreducible_strings(n, d):
            derivable.update(h for _, _, h in successors(g, CLASS_OPERATIONS))
    return sorted(seen - derivable)


@dataclass(frozen=True)
class Edge:
    source: RString
    target: RString
    op: str
    i: int | None = None

    def __str__(self) -> str:
        return f"{self.source} -> {self.target} [{self.op}]"


def class_edges(elem: RString, max_dim: int) -> list[Edge]:
    """Derivation edges of the class closure, one per (source, target, op).

    Left and right splitting of the same entry can give the same target; such
    duplicates collapse to a single edge labelled with the first operation.
    """
    seen = {elem}
    frontier = [elem]
    edges: dict[tuple[RString, RString], Edge] = {}
    while frontier:
        nxt = []
        for g in frontier:
            for op, i, h in successors(g, CLASS_OPERATIONS):
                if h.dim > max_dim:
                    continue
                edges.setdefault((g, h), Edge(g, h, op, i))
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return sorted(edges.values(), key=lambda e: (e.source, e.target))


def class_members(elem: RString, max_dim: int) -> list[RString]:
    """Closure of elem under appending, splitting and insertion up to max_dim."""
    members = {elem}
    for e in class_edges(elem, max_dim):
        members.add(e.target)
    return sorted(members)


def survives_right_multiplication(gamma: RString) -> bool:
    """Elementary strings with a trailing zero survive right multiplication by
    D3g_0; the rest admit right appending and cancel pairwise."""
    return gamma.entries[-1] == 0


# --------------------------------------------------------------------------
# numerical evaluation


@dataclass(frozen=True)
class RMatrixContext:
    """A-tilde (invertible) and the diagonal C-tilde."""

    A_tilde: np.ndarray
    c_tilde: np.ndarray
    condition_threshold: float = 1e12

    def __post_init__(self):
        At = np.array(self.A_tilde, dtype=float)
        ct = np.array(self.c_tilde, dtype=float)
        if At.ndim != 2 or At.shape[0] != At.shape[1] or ct.shape != (At.shape[0],):
            raise ValueError("A-tilde must be square and c-tilde its diagonal")
        cond = np.linalg.cond(At)
        if not np.isfinite(cond) or cond > self.condition_threshold:
            raise HypothesisError(f"A-tilde is singular (cond={cond:.3e})")
        object.__setattr__(self, "A_tilde", At)
        object.__setattr__(self, "c_tilde", ct)
        object.__setattr__(self, "_inv", np.linalg.inv(At))

    @classmethod
    def from_tableau(cls, t) -> "RMatrixContext":
        return cls(t.A_tilde, t.c[1:])

    @classmethod
    def random(cls, size: int, rng: np.random.Generator, max_condition: float = 1e6) -> "RMatrixContext":
        """Entries uniform in [-1, 1], resampled until cond(A-tilde) <= max_condition."""
        while True:
            At = rng.uniform(-1.0, 1.0, (size, size))
            ct = rng.uniform(-1.0, 1.0, size)
            if np.linalg.cond(At) <= max_condition:
                return cls(At, ct)


def eval_R(gamma: RString, ctx: RMatrixContext) -> np.ndarray:
    if gamma.dim < 2 or gamma.dim % 2:
        raise ValueError(f"R_gamma needs an even dimension >= 2, got {gamma}")
    if not is_irreducible(gamma):
        raise ValueError(f"{gamma} is not irreducible")
    size = ctx.A_tilde.shape[0]
    out = np.eye(size)
    inv = ctx._inv
    for pos, e in enumerate(gamma.entries, start=1):
        out = out * ctx.c_tilde**e  # right-multiplication by diag(c)^e
        if pos == gamma.dim:
            break
        out = out @ (inv if pos % 2 else ctx.A_tilde)
    return out


def format_edges(edges: Iterable[Edge]) -> str:
    lines = sorted(str(e) for e in edges)
    return "\n".join(lines) + ("\n" if lines else "")
