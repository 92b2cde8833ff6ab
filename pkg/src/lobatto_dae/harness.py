"""Convergence studies, order fits and the consolidated verification run."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import symbols
from .dae import SolverConfig, SystemState, integrate, newton_step_solve, phi_residual
from .errors import InsufficientDataError, LobattoDAEError, StudyAbortedError
from .problems import fine_reference, get_problem
from .tableau import (
    ConditionReport,
    PartitionedTableau,
    check_conjugacy,
    check_hypotheses,
    check_simplifying,
    condition_order,
    lobatto_pair,
    stability_at_infinity,
    stability_function,
    stability_function_stiff,
)

ROUNDOFF_FLOOR = 100 * np.finfo(float).eps
MIN_FIT_POINTS = 4
SLOPE_TOL = 0.25
R2_MIN = 0.99
WINDOW_R2 = 0.999
VARIABLES = ("q", "p", "lambda")


@dataclass(frozen=True)
class StudyConfig:
    problem: str = "particle"
    params: dict = field(default_factory=dict)
    s: int = 2
    h0: float = 0.2
    ratio: float = 0.5
    steps: int = 7
    T: float = 1.0
    solver: SolverConfig = SolverConfig()
    output: Optional[str] = None

    def __post_init__(self):
        if self.steps < MIN_FIT_POINTS:
            raise ValueError(f"need at least {MIN_FIT_POINTS} step sizes, got {self.steps}")
        if not (self.h0 > 0 and 0 < self.ratio < 1):
            raise ValueError("need h0 > 0 and 0 < ratio < 1")

    @property
    def step_sizes(self) -> list[float]:
        return [self.h0 * self.ratio**k for k in range(self.steps)]


@dataclass(frozen=True)
class FitResult:
    slope: float
    r2: float
    points: tuple[tuple[float, float], ...]


@dataclass
class VariableReport:
    variable: str
    points: list[tuple[float, float]]
    expected: int
    fit: Optional[FitResult]
    note: str = ""

    @property
    def passed(self) -> bool:
        return (
            self.fit is not None
            and abs(self.fit.slope - self.expected) <= SLOPE_TOL
            and self.fit.r2 >= R2_MIN
        )

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass
class ConvergenceReport:
    problem: str
    s: int
    variables: list[VariableReport]
    max_phi: float
    max_newton_iters: int

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.variables)

    def __getitem__(self, name: str) -> VariableReport:
        for v in self.variables:
            if v.variable == name:
                return v
        raise KeyError(name)


def fit_order(points: Iterable[tuple[float, float]]) -> FitResult:
    """Least-squares slope of log(error) against log(h) above the round-off floor."""
    pts = [(float(h), float(e)) for h, e in points]
    usable = [(h, e) for h, e in pts if e > ROUNDOFF_FLOOR and h > 0]
    if len(usable) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"only {len(usable)} points above the floor {ROUNDOFF_FLOOR:.3g}; need {MIN_FIT_POINTS}", usable
        )
    x = np.log([h for h, _ in usable])
    y = np.log([e for _, e in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), r2, tuple(usable))


def asymptotic_fit(points: list[tuple[float, float]]) -> FitResult:
    """Fit over the asymptotic window.

    After floor trimming, the window is the longest run of consecutive step
    sizes whose log-log fit has R^2 >= 0.999; among equally long runs the best
    R^2 wins. If no run qualifies the fit uses every usable point. The rule
    never looks at the expected order.
    """
    full = fit_order(points)
    usable = list(full.points)
    best = None
    for length in range(len(usable), MIN_FIT_POINTS - 1, -1):
        for start in range(len(usable) - length + 1):
            cand = fit_order(usable[start : start + length])
            if cand.r2 >= WINDOW_R2 and (best is None or cand.r2 > best.r2):
                best = cand
        if best is not None:
            return best
    return full


def expected_orders(pair: PartitionedTableau) -> dict[str, int]:
    """Global orders from the measured B, C, D orders and R(infinity)."""
    p = condition_order(pair, "B")
    q = condition_order(pair, "C")
    r = condition_order(pair, "D")
    rinf = stability_at_infinity(pair.first)
    lam = q - 1 if math.isclose(rinf, 1.0, abs_tol=1e-12) else q
    return {"q": min(p, q + r + 1), "p": min(p, 2 * q, q + r), "lambda": lam}


def run_convergence(cfg: StudyConfig) -> ConvergenceReport:
    prob = get_problem(cfg.problem, **cfg.params)
    pair = lobatto_pair(cfg.s)
    expected = expected_orders(pair)
    if prob.exact is not None:
        qT, pT, lT = prob.exact(cfg.T)
    else:
        ref = fine_reference(prob, cfg.T, min(cfg.step_sizes), cfg.solver)
        qT, pT, lT = ref.q, ref.p, ref.lam
    errors = {v: [] for v in VARIABLES}
    max_phi, max_iters = 0.0, 0
    for h in cfg.step_sizes:
        nsteps = int(round(cfg.T / h))
        h_eff = cfg.T / nsteps
        try:
            traj = integrate(prob, pair, prob.initial, h_eff, nsteps, cfg.solver)
        except LobattoDAEError as exc:
            raise StudyAbortedError(f"integration failed at h={h_eff!r}: {exc}", h=h_eff) from exc
        end = traj[-1]
        errors["q"].append((h_eff, float(np.max(np.abs(end.q - qT)))))
        errors["p"].append((h_eff, float(np.max(np.abs(end.p - pT)))))
        errors["lambda"].append((h_eff, float(np.max(np.abs(end.lam - lT)))))
        max_phi = max(max_phi, max(phi_residual(prob, st) for st in traj))
        max_iters = max(max_iters, max(st.newton_iters for st in traj))
    reports = []
    for v in VARIABLES:
        try:
            fit, note = asymptotic_fit(errors[v]), ""
        except InsufficientDataError as exc:
            fit, note = None, str(exc)
        reports.append(VariableReport(v, errors[v], expected[v], fit, note))
    return ConvergenceReport(cfg.problem, cfg.s, reports, max_phi, max_iters)


STAGE_VARIABLES = ("Q", "p", "P", "Lambda")


def stage_errors(prob, pair: PartitionedTableau, t0: float, h: float, solver: SolverConfig = SolverConfig()) -> dict:
    """Max stage errors of one step started on the exact solution at t0."""
    q0, p0, l0 = prob.exact(t0)
    sol = newton_step_solve(prob, pair, SystemState(t0, q0, p0, l0), h, solver)
    ex = [prob.exact(t0 + ci * h) for ci in pair.c]
    rng = range(pair.s)
    return {
        "Q": max(float(np.max(np.abs(sol.Q[i] - ex[i][0]))) for i in rng),
        "p": max(float(np.max(np.abs(sol.p_stage[i] - ex[i][1]))) for i in rng),
        "P": max(float(np.max(np.abs(sol.P[i] - ex[i][1]))) for i in rng),
        "Lambda": max(float(np.max(np.abs(sol.Lam[i] - ex[i][2]))) for i in rng),
    }


def stage_order_study(
    problem: str = "manufactured", s: int = 3, step_sizes: Iterable[float] | None = None, t0: float = 0.0
) -> dict[str, FitResult]:
    """Observed orders of the internal stages (Q, p, P, Lambda)."""
    prob = get_problem(problem)
    pair = lobatto_pair(s)
    hs = list(step_sizes) if step_sizes is not None else [0.2 * 0.5**k for k in range(6)]
    rows = [stage_errors(prob, pair, t0, h) for h in hs]
    return {v: fit_order([(h, r[v]) for h, r in zip(hs, rows)]) for v in STAGE_VARIABLES}


def convergence_csv(reports: Iterable[ConvergenceReport]) -> str:
    out = io.StringIO()
    out.write("problem,s,variable,h,error\n")
    for rep in reports:
        for v in rep.variables:
            for h, e in v.points:
                out.write(f"{rep.problem},{rep.s},{v.variable},{h:.17g},{e:.17g}\n")
    return out.getvalue()


def convergence_summary_csv(reports: Iterable[ConvergenceReport]) -> str:
    out = io.StringIO()
    out.write("problem,s,variable,expected,slope,r2,points,verdict\n")
    for rep in reports:
        for v in rep.variables:
            slope = f"{v.fit.slope:.6f}" if v.fit else "nan"
            r2 = f"{v.fit.r2:.6f}" if v.fit else "nan"
            npts = len(v.fit.points) if v.fit else 0
            out.write(f"{rep.problem},{rep.s},{v.variable},{v.expected},{slope},{r2},{npts},{v.verdict}\n")
    return out.getvalue()


def format_convergence_table(reports: Iterable[ConvergenceReport]) -> str:
    lines = [f"{'problem':<14}{'s':>3}  {'var':<7}{'expected':>9}{'slope':>9}{'R^2':>9}  verdict"]
    for rep in reports:
        for v in rep.variables:
            slope = f"{v.fit.slope:9.3f}" if v.fit else f"{'n/a':>9}"
            r2 = f"{v.fit.r2:9.5f}" if v.fit else f"{'n/a':>9}"
            lines.append(f"{rep.problem:<14}{rep.s:>3}  {v.variable:<7}{v.expected:>9}{slope}{r2}  {v.verdict.upper()}")
    return "\n".join(lines)


LOBATTO_TARGETS = {
    "B": lambda s: 2 * s - 2,
    "C": lambda s: s,
    "D": lambda s: s - 2,
    "Bhat": lambda s: 2 * s - 2,
    "Chat": lambda s: s - 2,
    "Dhat": lambda s: s,
    "CChat": lambda s: s,
    "DDhat": lambda s: s,
    "ChatC": lambda s: s - 2,
    "DhatD": lambda s: s - 2,
}


def _report(name: str, order, value: float, tol: float, s: int, detail: str = "") -> ConditionReport:
    return ConditionReport(name=name, order=order, max_residual=float(value), tol=tol, s=s, detail=detail)


def stability_reports(pair: PartitionedTableau, rng: np.random.Generator, samples: int = 100) -> list[ConditionReport]:
    s = pair.s
    rinf = stability_at_infinity(pair.first)
    zs = 10 * np.sqrt(rng.uniform(size=samples)) * np.exp(2j * np.pi * rng.uniform(size=samples))
    gap = max(abs(stability_function(pair.first, z) - stability_function_stiff(pair.first, z)) for z in zs)
    return [
        _report("R(inf)=(-1)^(s-1)", None, abs(rinf - (-1) ** (s - 1)), 1e-12, s, f"R(inf)={rinf:.15g}"),
        _report("R(z) formulas agree", None, gap, 1e-10, s, f"{samples} random z, |z|<=10"),
    ]


def word_reports(pair: PartitionedTableau) -> list[ConditionReport]:
    """Vanishing-word suite plus the reduced identities behind it."""
    s = pair.s
    k_max = symbols.theorem_range(pair)
    if k_max < 0:
        return [_report("words", k_max, math.inf, symbols.VANISHING_TOL, s, "measured orders leave no range")]
    values = symbols.evaluate_words(pair, k_max)
    failing = [v for v in values if v.verdict != "vanishing"]
    worst = max(abs(v.value) for v in values)
    detail = f"{len(values)} words, k<={k_max}"
    if failing:
        detail += f", {len(failing)} not vanishing, e.g. {failing[0].word}"
    plain = [v for v in values if "ACAinv" not in v.word.letters]
    reports = [
        _report("words", k_max, worst, symbols.VANISHING_TOL, s, detail),
        _report(
            "words without ACAinv",
            k_max,
            max(abs(v.value) for v in plain),
            symbols.VANISHING_TOL,
            s,
            f"{len(plain)} words",
        ),
    ]
    probe = [v for v in symbols.evaluate_words(pair, k_max + 1) if v.word.k == k_max + 1]
    sharp = max(abs(v.value) for v in probe)
    reports.append(
        ConditionReport(
            name="sharpness k=s-2",
            order=k_max + 1,
            max_residual=0.0 if sharp > symbols.NONZERO_TOL else math.inf,
            s=s,
            detail=f"max |value| = {sharp:.3g} over {len(probe)} words",
        )
    )
    ident = max(
        (float(np.max(np.abs(symbols.d_identity_residual(pair, k)))) for k in range(1, s - 1)), default=0.0
    )
    reports.append(_report("b C^k A^- identity", s - 2, ident, 1e-12, s, "first entry masked at k=1"))
    r = condition_order(pair, "D")
    c1 = max((abs(symbols.reduced_combo1(pair, k)) for k in range(1, r + 1)), default=0.0)
    c2 = max((abs(symbols.reduced_combo2(pair, k)) for k in range(1, r + 1)), default=0.0)
    reports.append(_report("combination 1", r, c1, 1e-12, s))
    reports.append(_report("combination 2", r, c2, 1e-12, s))
    return reports


def verify_pair(pair: PartitionedTableau, tol: float = 1e-12, seed: int = 0) -> list[ConditionReport]:
    s = pair.s
    reports = [check_simplifying(pair, which, target(s), tol) for which, target in LOBATTO_TARGETS.items()]
    reports += check_hypotheses(pair, tol)
    reports.append(check_conjugacy(pair, tol))
    reports += stability_reports(pair, np.random.default_rng(seed + s))
    if s >= 3:
        reports += word_reports(pair)
    return reports


def run_verify(s_range: Iterable[int] = range(2, 6), tol: float = 1e-12) -> list[ConditionReport]:
    out = []
    for s in s_range:
        out += verify_pair(lobatto_pair(s), tol)
    return out


def format_verify_table(reports: Iterable[ConditionReport]) -> str:
    return "\n".join(r.line() for r in reports)


def verify_csv(reports: Iterable[ConditionReport]) -> str:
    out = io.StringIO()
    out.write("s,condition,order,max_residual,tol,verdict\n")
    for r in reports:
        order = "" if r.order is None else r.order
        out.write(f"{r.s},{r.name},{order},{r.max_residual:.17g},{r.tol:.3g},{'pass' if r.passed else 'fail'}\n")
    return out.getvalue()


CONFIG_KEYS = {
    "problem": str,
    "omega": float,
    "slope": float,
    "s": int,
    "h0": float,
    "ratio": float,
    "steps": int,
    "T": float,
    "tol": float,
    "max_iter": int,
    "jacobian": str,
    "newton": str,
    "output": str,
}
PROBLEM_PARAMS = {"manufactured": ("omega",), "knife-edge": ("slope",), "particle": ()}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = CONFIG_KEYS[key](val)
    return values


def load_config(path: str | Path) -> dict:
    return parse_config(Path(path).read_text())


def study_from_values(values: dict) -> StudyConfig:
    """Build a study config from parsed keys; absent keys keep their defaults."""
    problem = values.get("problem", "particle")
    params = {k: values[k] for k in PROBLEM_PARAMS.get(problem, ()) if k in values}
    solver_keys = {k: values[k] for k in ("tol", "max_iter", "jacobian", "newton") if k in values}
    study_keys = {k: values[k] for k in ("s", "h0", "ratio", "steps", "T", "output") if k in values}
    return StudyConfig(problem=problem, params=params, solver=replace(SolverConfig(), **solver_keys), **study_keys)
