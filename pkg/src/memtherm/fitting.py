"""Weighted least-squares fits of diagnostics against system size.

Three-parameter families ``a + b g(c N)`` are linear in ``(a, b)`` once
``c`` is fixed.  The fit scans a grid of ``c`` solving the linear problem
exactly at each node, then polishes the best nodes with a damped
Gauss-Newton (Levenberg-Marquardt) iteration on all three parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

C_GRID = np.arange(-3.0, 3.0 + 1e-9, 0.5)
MAX_ITER = 500

R2_FORMULA = "adj_r2 = 1 - (1 - R2) (n - 1) / (n - k), R2 = 1 - SSR_w / SST_w (centered)"
R2U_FORMULA = "adj_r2_uncentered = 1 - (1 - R2u) n / (n - k), R2u = 1 - SSR_w / sum(w y^2)"


class SingularFitError(ValueError):
    pass


@dataclass(frozen=True)
class FitModel:
    family: str
    label: str
    k: int
    basis: Callable  # (N, c) -> g(N)
    dbasis: Callable | None = None  # (N, c) -> dg/dc

    def __call__(self, N, a, b, c=None):
        return a + b * self.basis(np.asarray(N, dtype=float), c)


def _exp(N, c):
    return np.exp(c * N)


def _dexp(N, c):
    return N * np.exp(c * N)


def _pow(N, c):
    return N ** c


def _dpow(N, c):
    return np.log(N) * N ** c


FAMILIES = {
    "exp": FitModel("exp", "a+b*exp(c*N)", 3, _exp, _dexp),
    "power": FitModel("power", "a+b*N^c", 3, _pow, _dpow),
    "inv": FitModel("inv", "a+b*N^-1", 2, lambda N, c: 1.0 / N),
    "invsqrt": FitModel("invsqrt", "a+b*N^-1/2", 2, lambda N, c: 1.0 / np.sqrt(N)),
}


@dataclass(frozen=True)
class FitResult:
    family: str
    params: tuple[float, ...]
    errors: tuple[float, ...]
    adj_r2: float
    adj_r2_uncentered: float
    rmse: float
    mask: tuple[int, ...]
    weights: tuple[float, ...]
    converged: bool
    iterations: int
    message: str = ""

    def value(self, name: str) -> float | None:
        i = "abc".index(name)
        return self.params[i] if i < len(self.params) else None

    def error(self, name: str) -> float | None:
        i = "abc".index(name)
        return self.errors[i] if i < len(self.errors) else None


def _linear_ab(g: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    sw = np.sqrt(w)
    A = np.column_stack([sw, sw * g])
    coef, *_ = np.linalg.lstsq(A, sw * y, rcond=None)
    r = sw * (y - coef[0] - coef[1] * g)
    return coef, float(r @ r)


def _lm(model: FitModel, N, y, w, theta):
    sw = np.sqrt(w)

    def resid(th):
        return sw * (y - model(N, *th))

    def jac(th):
        a, b, c = th
        return -sw[:, None] * np.column_stack([np.ones_like(N), model.basis(N, c), b * model.dbasis(N, c)])

    r = resid(theta)
    ssr = float(r @ r)
    lam = 1e-3
    it = 0
    converged = False
    while it < MAX_ITER:
        it += 1
        J = jac(theta)
        JtJ = J.T @ J
        g = J.T @ r
        step_ok = False
        while lam < 1e16:
            Adamp = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-300))
            try:
                delta = np.linalg.solve(Adamp, -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + delta
            r_t = resid(trial)
            ssr_t = float(r_t @ r_t)
            if np.isfinite(ssr_t) and ssr_t <= ssr:
                step_ok = True
                break
            lam *= 10
        if not step_ok:
            converged = True  # no downhill step left at any damping
            break
        small = np.all(np.abs(delta) <= 1e-12 * (np.abs(theta) + 1e-12))
        flat = ssr - ssr_t <= 1e-15 * max(ssr, 1e-300)
        theta, r, ssr = trial, r_t, ssr_t
        lam = max(lam / 10, 1e-12)
        if small or flat:
            converged = True
            break
    return theta, ssr, it, converged


def _jacobian(model: FitModel, N, theta) -> np.ndarray:
    cols = [np.ones_like(N), model.basis(N, theta[2] if model.k == 3 else None)]
    if model.k == 3:
        cols.append(theta[1] * model.dbasis(N, theta[2]))
    return np.column_stack(cols)


def fit(model: FitModel | str, N: Sequence[float], y: Sequence[float],
        w: Sequence[float] | None = None, mask: Sequence[bool] | None = None) -> FitResult:
    """Minimise ``sum w (y - model(N))^2`` over the unmasked points.

    Standard errors come from ``s^2 (J^T W J)^-1`` with
    ``s^2 = SSR_w / (n - k)``.
    """
    if isinstance(model, str):
        model = FAMILIES[model]
    N = np.asarray(N, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    keep = np.ones(len(N), bool) if mask is None else np.asarray(mask, dtype=bool)
    keep &= np.isfinite(y) & np.isfinite(w)
    N, y, w = N[keep], y[keep], w[keep]
    # canonical order so the result does not depend on input order
    order = np.lexsort((y, N))
    N, y, w = N[order], y[order], w[order]
    n, k = len(N), model.k
    if n <= k:
        raise ValueError(f"{n} points cannot determine {k} parameters")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")

    if k == 2:
        coef, ssr = _linear_ab(model.basis(N, None), y, w)
        theta, it, converged, msg = coef, 1, True, ""
    else:
        starts = []
        for c in C_GRID:
            g = model.basis(N, c)
            if np.ptp(g) == 0:
                continue
            coef, s = _linear_ab(g, y, w)
            starts.append((s, np.array([coef[0], coef[1], c])))
        starts.sort(key=lambda t: t[0])
        best = None
        for _, th0 in starts[:4]:
            th, s, it_, conv = _lm(model, N, y, w, th0)
            if best is None or s < best[1]:
                best = (th, s, it_, conv)
        theta, ssr, it, converged = best
        msg = "" if converged else f"no convergence in {MAX_ITER} iterations"

    J = _jacobian(model, N, theta)
    JtWJ = J.T @ (w[:, None] * J)
    s2 = ssr / (n - k)
    try:
        if np.linalg.cond(JtWJ) > 1e15:
            raise np.linalg.LinAlgError("ill-conditioned")
        cov = s2 * np.linalg.inv(JtWJ)
        errors = tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(cov))
    except np.linalg.LinAlgError:
        errors = (float("nan"),) * k
        msg = (msg + "; " if msg else "") + "singular normal matrix"

    y_w = float(np.sum(w * y) / np.sum(w))
    sst = float(np.sum(w * (y - y_w) ** 2))
    ssu = float(np.sum(w * y * y))
    r2 = 1 - ssr / sst if sst > 0 else float("nan")
    r2u = 1 - ssr / ssu if ssu > 0 else float("nan")
    return FitResult(
        family=model.family,
        params=tuple(float(v) for v in theta),
        errors=errors,
        adj_r2=1 - (1 - r2) * (n - 1) / (n - k),
        adj_r2_uncentered=1 - (1 - r2u) * n / (n - k),
        rmse=math.sqrt(ssr / (n - k)),
        mask=tuple(int(v) for v in N),
        weights=tuple(float(v) for v in w),
        converged=converged,
        iterations=it,
        message=msg,
    )


# The fits reported for the N-series.  ``mask`` selects sizes, ``weight``
# names the report field whose inverse square weights the points.
@dataclass(frozen=True)
class SuiteRow:
    quantity: str
    family: str
    mask: str = "all"
    weight: str | None = None
    primary: bool = False


SUITE = (
    SuiteRow("n_bar", "exp", "exclude3", primary=True),
    SuiteRow("n_bar", "invsqrt", "exclude3"),
    SuiteRow("n_mc", "exp", "even", primary=True),
    SuiteRow("n_mc", "inv", "even"),
    SuiteRow("n_mc", "invsqrt", "even"),
    SuiteRow("sigma_t", "exp", primary=True),
    SuiteRow("sigma_E/N", "power", primary=True),
    SuiteRow("n_window", "exp", primary=True),
    SuiteRow("n_window", "power"),
    SuiteRow("n_av", "inv", "odd", primary=True),
    SuiteRow("delta", "exp", "even", "sigma", primary=True),
    SuiteRow("delta_mc", "exp", "even", "sigma_mc", primary=True),
    SuiteRow("delta_max_mc", "power", "even", primary=True),
    SuiteRow("delta_max_mc", "exp", "even"),
    SuiteRow("offdiag_av", "exp", primary=True),
)

MASKS = {
    "all": lambda N: True,
    "even": lambda N: N % 2 == 0,
    "odd": lambda N: N % 2 == 1,
    "exclude3": lambda N: N != 3,
}


def quantity(report, name: str) -> float:
    if name == "sigma_E/N":
        return report.sigma_E / report.N
    v = getattr(report, name)
    return float("nan") if v is None else float(v)


@dataclass
class SuiteEntry:
    row: SuiteRow
    result: FitResult | None = None
    error: str | None = None


# rows that only need the energy width and the window count, which are
# available from sparse methods at sizes too large to diagonalize
SPARSE_QUANTITIES = ("sigma_E/N", "n_window")


def fit_suite(reports, extra=()) -> list[SuiteEntry]:
    """Fit every ``SUITE`` row.  ``extra`` holds sparse-only points (objects
    with ``N``, ``sigma_E`` and ``n_window``) used by ``SPARSE_QUANTITIES``."""
    reports = sorted(reports, key=lambda r: r.N)
    have = {r.N for r in reports}
    extra = sorted((p for p in extra if p.N not in have), key=lambda p: p.N)
    out = []
    for row in SUITE:
        pool = reports + extra if row.quantity in SPARSE_QUANTITIES else reports
        chosen = [r for r in pool if MASKS[row.mask](r.N)]
        N = [r.N for r in chosen]
        y = [quantity(r, row.quantity) for r in chosen]
        w = None
        if row.weight is not None:
            w = [quantity(r, row.weight) ** -2 if quantity(r, row.weight) > 0 else float("nan")
                 for r in chosen]
        try:
            out.append(SuiteEntry(row, fit(row.family, N, y, w)))
        except (ValueError, np.linalg.LinAlgError) as exc:
            out.append(SuiteEntry(row, error=str(exc)))
    return out
