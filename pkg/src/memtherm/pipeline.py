"""Batch study over a range of system sizes.

For every ``N`` the study builds the Hamiltonian, diagonalizes it (or loads
the cached spectrum), checks the conserved charges and trace identities,
computes the diagnostics, level statistics and independence tests, and
writes per-size data files.  Fits across sizes come last.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cache as spcache
from .diagnostics import DiagnosticsReport, analyze, coefficients, expectation_t, observable_matrix
from .fitting import R2_FORMULA, R2U_FORMULA, SuiteEntry, fit_suite
from .fock import sector_dimension
from .indeptests import TestResult, run_all_tests
from .levelstats import goe_pdf, poisson_pdf, spacing_stats
from .model import ModelParams, build_hamiltonian, initial_state_vector
from .spectrum import SolverError, Spectrum, check_nondegeneracy, count_in_window, diagonalize, verify_sector_charges

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
CHARGE_TOL = 1e-10
IDENTITY_TOL = 1e-10
DEGENERACY_TOL = 1e-12


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    n_min: int = 2
    n_max: int = 8
    mode_index: int = 1
    include_n9: bool = False
    cache_dir: str = "cache"
    out_dir: str = "results"
    bins: str | int = "sqrt"
    perm_replicates: int = 10_000
    seed: int = 0
    threads: int | None = None
    mem_budget_gb: float = 6.0
    time_max: float = 200.0
    time_step: float = 0.1
    use_cache: bool = True
    sparse_n9: bool = True

    def validate(self) -> "StudyConfig":
        if not 2 <= self.n_min <= self.n_max <= 9:
            raise ConfigError(f"need 2 <= n_min <= n_max <= 9, got {self.n_min}..{self.n_max}")
        if self.n_max == 9 and not self.include_n9:
            raise ConfigError("N=9 needs include_n9")
        if self.perm_replicates < 1000:
            raise ConfigError("perm_replicates must be >= 1000")
        if not 1 <= self.mode_index <= 2 * self.n_min:
            raise ConfigError(f"mode index {self.mode_index} outside 1..{2 * self.n_min}")
        if self.time_step <= 0 or self.time_max < 0:
            raise ConfigError("time grid needs time_step > 0 and time_max >= 0")
        if self.mem_budget_gb <= 0:
            raise ConfigError("memory budget must be positive")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    @property
    def sizes(self) -> list[int]:
        return list(range(self.n_min, self.n_max + 1))

    @property
    def sparse_sizes(self) -> list[int]:
        """Sizes that only get the sparse energy-width and window-count point."""
        return [9] if self.sparse_n9 and self.n_max == 8 else []

    def time_grid(self) -> np.ndarray:
        n = int(math.floor(self.time_max / self.time_step + 1e-9))
        return np.arange(n + 1) * self.time_step


def estimated_bytes(N: int) -> int:
    """Peak resident bytes of one size: dense input plus eigenvectors."""
    dim = sector_dimension(N, N, N // 2)
    return 2 * 8 * dim * dim + 64 * 2**20


@dataclass
class SizeOutcome:
    N: int
    report: DiagnosticsReport | None = None
    spacing: dict | None = None
    tests: list[TestResult] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    diagonalized: bool = False
    seconds: float = 0.0
    error: str | None = None

    @property
    def verified(self) -> bool:
        return self.error is None and all(c["ok"] for c in self.checks.values())


@dataclass
class SparsePoint:
    """Energy width and window count from ``H`` alone, no eigenvectors."""
    N: int
    dim: int
    E_mean: float
    sigma_E: float
    n_window: int
    seconds: float = 0.0
    cached: bool = False


@dataclass
class StudyResult:
    exit_code: int
    outcomes: list[SizeOutcome]
    fits: list[SuiteEntry]
    failures: list[str]
    sparse: list[SparsePoint] = field(default_factory=list)

    @property
    def diagonalizations(self) -> int:
        return sum(o.diagonalized for o in self.outcomes)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


def load_spectrum(model, cfg: StudyConfig) -> tuple[Spectrum, bool]:
    path = spcache.cache_path(cfg.cache_dir, model.params.N)
    if cfg.use_cache and path.exists():
        try:
            s = spcache.read_cache(path, model.params)
            log.info("N=%d: loaded spectrum from %s", model.params.N, path)
            return s, False
        except spcache.CacheError as exc:
            log.warning("N=%d: rejecting cache %s (%s)", model.params.N, path, exc)
    log.info("N=%d: diagonalizing dim %d", model.params.N, model.dim)
    s = diagonalize(model)
    if cfg.use_cache:
        spcache.write_cache(path, model.params, s)
    return s, True


def _checks(N, params, s, basis, report) -> dict:
    ab, mem = verify_sector_charges(s, basis)
    dev_ab = float(np.max(np.abs(ab - N)))
    dev_mem = float(np.max(np.abs(mem - params.N_m)))
    trace = params.N_m / (2 * params.K)
    return {
        "nondegenerate": {"value": report.min_gap, "ok": report.min_gap > DEGENERACY_TOL},
        "charge_ab": {"value": dev_ab, "ok": dev_ab <= CHARGE_TOL},
        "charge_memory": {"value": dev_mem, "ok": dev_mem <= CHARGE_TOL},
        "energy_zero": {"value": abs(report.E_mean), "ok": abs(report.E_mean) <= IDENTITY_TOL},
        "trace_identity": {"value": abs(report.n_av - trace), "ok": abs(report.n_av - trace) <= IDENTITY_TOL},
    }


def run_size(N: int, cfg: StudyConfig) -> SizeOutcome:
    t0 = time.perf_counter()
    out = SizeOutcome(N)
    out_dir = Path(cfg.out_dir)
    try:
        params = ModelParams.from_size(N)
        model = build_hamiltonian(params)
        s, out.diagonalized = load_spectrum(model, cfg)
        vec = initial_state_vector(params, model.basis)
        rep = analyze(s, model.basis, vec, mode=cfg.mode_index)
        out.report = rep
        out.checks = _checks(N, params, s, model.basis, rep)

        o = observable_matrix(s, model.basis, cfg.mode_index)
        c = coefficients(s, vec)
        t = cfg.time_grid()
        series = expectation_t(c, o, s, t)
        del s, o
        _write_csv(out_dir / f"timeseries_N{N}.csv", ["t", "n_t", "n_bar"],
                   ((ti, v, rep.n_bar) for ti, v in zip(t, series)))

        sp = spacing_stats(rep.energies, cfg.bins)
        out.spacing = {"argmax_s": sp.argmax_s, "goe_distance": sp.goe_distance,
                       "poisson_distance": sp.poisson_distance, "bins": len(sp.density),
                       "count": len(sp.spacings)}
        mids = 0.5 * (sp.edges[:-1] + sp.edges[1:])
        _write_csv(out_dir / f"spacings_N{N}.csv", ["left", "right", "density", "goe", "poisson"],
                   zip(sp.edges[:-1], sp.edges[1:], sp.density, goe_pdf(mids), poisson_pdf(mids)))

        _write_csv(out_dir / f"scatter_N{N}.csv", ["alpha", "E", "n_aa", "C2", "dn", "dc", "in_window"],
                   zip(range(rep.dim), rep.energies, rep.diag, rep.C ** 2, rep.dn, rep.dc, rep.window))

        out.tests = run_all_tests(rep, replicates=cfg.perm_replicates, seed=cfg.seed)
    except OSError:
        raise
    except Exception as exc:  # isolate per-size failures
        log.exception("N=%d failed", N)
        out.error = f"{type(exc).__name__}: {exc}"
    out.seconds = time.perf_counter() - t0
    log.info("N=%d done in %.1f s", N, out.seconds)
    return out


def sparse_estimated_bytes(N: int) -> int:
    """Rough peak of one sparse factorization (fill grows ~ dim^1.5)."""
    dim = sector_dimension(N, N, N // 2)
    return int(24 * 15 * dim ** 1.5) + 256 * 2**20


def sparse_point(N: int, cfg: StudyConfig) -> SparsePoint:
    """``<H>``, ``sigma_E`` and the window count by Sylvester inertia.

    The result is small, so it is cached as JSON next to the spectra,
    keyed by the parameter block.
    """
    t0 = time.perf_counter()
    params = ModelParams.from_size(N)
    path = Path(cfg.cache_dir) / f"window_N{N}.json"
    block = [float(v) for v in params.as_block()]
    if cfg.use_cache and path.exists():
        try:
            d = json.loads(path.read_text())
            if d.get("params") == block and d.get("N") == N:
                log.info("N=%d: loaded window count from %s", N, path)
                return SparsePoint(N, d["dim"], d["E_mean"], d["sigma_E"], d["n_window"], cached=True)
            log.warning("N=%d: rejecting %s (parameter mismatch)", N, path)
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("N=%d: rejecting %s (%s)", N, path, exc)
    model = build_hamiltonian(params)
    vec = initial_state_vector(params, model.basis)
    Hv = model.H @ vec
    E = float(vec @ Hv)
    sigma = math.sqrt(max(float(Hv @ Hv) - E * E, 0.0))
    log.info("N=%d: counting levels in window by inertia, dim %d", N, model.dim)
    count = count_in_window(model.H, E, sigma)
    pt = SparsePoint(N, model.dim, E, sigma, count, time.perf_counter() - t0)
    if cfg.use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps({"N": N, "dim": pt.dim, "params": block, "E_mean": E,
                                   "sigma_E": sigma, "n_window": count}))
        tmp.replace(path)
    return pt


class _MemoryGate:
    """Admit jobs while their summed memory estimate fits the budget."""

    def __init__(self, budget: int):
        self.budget = budget
        self.used = 0
        self.cv = threading.Condition()

    def run(self, need: int, fn, *args):
        need = min(need, self.budget)  # a lone oversized job still runs
        with self.cv:
            self.cv.wait_for(lambda: self.used + need <= self.budget)
            self.used += need
        try:
            return fn(*args)
        finally:
            with self.cv:
                self.used -= need
                self.cv.notify_all()


def _fit_rows(fits: list[SuiteEntry], full: bool):
    for e in fits:
        r, res = e.row, e.result
        base = [r.quantity, r.family]
        if res is None:
            vals = [None] * 8
            mask, weights = "", ""
        else:
            p = list(res.params) + [None] * (3 - len(res.params))
            se = list(res.errors) + [None] * (3 - len(res.errors))
            vals = [res.adj_r2, res.rmse, p[0], se[0], p[1], se[1], p[2], se[2]]
            mask = " ".join(str(n) for n in res.mask)
            weights = "1" if r.weight is None else f"{r.weight}^-2"
        row = base + vals + [mask, weights]
        if full:
            row += [None if res is None else res.adj_r2_uncentered,
                    None if res is None else res.converged,
                    None if res is None else res.iterations,
                    r.primary, (e.error or (res.message if res else "")) or ""]
        yield row


FIT_HEADER = ["quantity", "family", "adj_r2", "rmse", "a", "sigma_a", "b", "sigma_b", "c", "sigma_c",
              "mask", "weights"]


def write_outputs(cfg: StudyConfig, outcomes: list[SizeOutcome], fits: list[SuiteEntry],
                  failures: list[str], sparse: list[SparsePoint] = ()) -> None:
    out = Path(cfg.out_dir)
    _write_csv(out / "table1.csv", FIT_HEADER, _fit_rows([f for f in fits], full=False),
               comment=R2_FORMULA)
    _write_csv(out / "fits.csv",
               FIT_HEADER + ["adj_r2_uncentered", "converged", "iterations", "primary", "message"],
               _fit_rows(fits, full=True), comment=f"{R2_FORMULA}\n{R2U_FORMULA}")
    _write_csv(out / "tests.csv", ["N", "test", "statistic", "p", "method", "seed", "replicates", "n",
                                   "dropped", "error"],
               ([o.N, t.name, t.statistic, t.p_value, t.method, t.seed, t.replicates, t.n, t.dropped,
                 t.error or ""] for o in outcomes for t in o.tests))

    cfg_json = asdict(cfg)
    doc = {
        "config": cfg_json,
        "failures": failures,
        "sizes": [
            {
                "N": o.N,
                "error": o.error,
                "checks": o.checks,
                "spacing": o.spacing,
                "tests": [asdict(t) for t in o.tests],
                "report": None if o.report is None else o.report.to_json(),
            }
            for o in outcomes
        ],
        "sparse": [{k: v for k, v in asdict(p).items() if k not in ("seconds", "cached")} for p in sparse],
        "fits": [
            {"row": asdict(e.row), "error": e.error, "result": None if e.result is None else asdict(e.result)}
            for e in fits
        ],
    }
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=1, default=float)


def run_study(cfg: StudyConfig) -> StudyResult:
    cfg.validate()
    try:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        if cfg.use_cache:
            Path(cfg.cache_dir).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directories: %s", exc)
        return StudyResult(EXIT_IO, [], [], [str(exc)])

    from threadpoolctl import threadpool_limits

    gate = _MemoryGate(int(cfg.mem_budget_gb * 2**30))
    workers = cfg.threads or 1
    try:
        with threadpool_limits(limits=cfg.threads):
            with ThreadPoolExecutor(max_workers=workers) as pool:
                # largest first so small sizes fill in around it
                order = sorted(cfg.sizes, key=estimated_bytes, reverse=True) if workers > 1 else cfg.sizes
                futures = {N: pool.submit(gate.run, estimated_bytes(N), run_size, N, cfg) for N in order}
                extra = {N: pool.submit(gate.run, sparse_estimated_bytes(N), sparse_point, N, cfg)
                         for N in cfg.sparse_sizes}
                outcomes = [futures[N].result() for N in cfg.sizes]
                sparse, sparse_errors = [], []
                for N, fut in extra.items():
                    try:
                        sparse.append(fut.result())
                    except (SolverError, MemoryError) as exc:
                        sparse_errors.append(f"N={N} (sparse): {type(exc).__name__}: {exc}")
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return StudyResult(EXIT_IO, [], [], [str(exc)])

    failures = list(sparse_errors)
    for o in outcomes:
        if o.error:
            failures.append(f"N={o.N}: {o.error}")
        for name, chk in o.checks.items():
            if not chk["ok"]:
                failures.append(f"N={o.N}: check {name} failed ({chk['value']:.3g})")

    reports = [o.report for o in outcomes if o.report is not None]
    fits = fit_suite(reports, sparse) if len(reports) >= 2 else []
    try:
        write_outputs(cfg, outcomes, fits, failures, sparse)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return StudyResult(EXIT_IO, outcomes, fits, failures + [str(exc)], sparse)
    for f in failures:
        log.error(f)
    return StudyResult(EXIT_VERIFY if failures else EXIT_OK, outcomes, fits, failures, sparse)
