"""Parameter sweeps, CSV rows and the analysis-vs-simulation comparison.

Every row is self-describing: it names the swept config key and value, the
SINR threshold (dB), the output, the method and, for Laplace outputs, the
argument ``v``.  Rows come out in a fixed order (grid point, output, method,
threshold or ``v``) whatever the number of workers.
"""
from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache, partial

import numpy as np

from . import analysis
from .analysis import LaplaceKind
from .params import CONFIG_KEYS, NetworkParams, ParameterError, db_to_linear, with_overrides
from .quadrature import QuadratureSettings
from .simulator import McEstimate, McSettings, simulate_laplace_curve, simulate_outage_curve, \
    simulate_p_d2d

COLUMNS = ("swept_key", "swept_value", "gamma_db", "output", "method", "value", "std_err",
           "wall_ms", "series", "v", "error")
LAPLACE_OUTPUTS = tuple(f"laplace_{k.name.lower()}" for k in LaplaceKind)
OUTPUTS = ("p_d2d", "outage_c", "outage_d", "ase", "pf_objective") + LAPLACE_OUTPUTS
METHODS = ("analytic", "mc")
# outputs measured on a rate scale; compared with a relative tolerance
RELATIVE_OUTPUTS = ("ase", "pf_objective")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def parse_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad number list {text!r}") from exc


def parse_grid(text: str) -> list[float]:
    """``"1,2,5"``, ``"lin:START:STOP:N"`` or ``"log:START:STOP:N"`` (inclusive ends)."""
    if text.startswith(("lin:", "log:")):
        kind, *rest = text.split(":")
        try:
            start, stop, n = float(rest[0]), float(rest[1]), int(rest[2])
        except (IndexError, ValueError) as exc:
            raise ParameterError(f"bad range {text!r}; expected {kind}:START:STOP:N") from exc
        if n < 1:
            raise ParameterError("range needs N >= 1 points")
        if kind == "lin":
            grid = np.linspace(start, stop, n)
        else:
            if start <= 0 or stop <= 0:
                raise ParameterError("log range needs positive ends")
            grid = np.geomspace(start, stop, n)
        return [float(g) for g in grid]
    return parse_list(text)


@dataclass(frozen=True)
class SweepSpec:
    base: NetworkParams
    key: str
    grid: tuple
    outputs: tuple = ("outage_c", "outage_d")
    methods: tuple = ("analytic",)
    gammas_db: tuple = (40.0,)
    mc: McSettings = field(default_factory=McSettings)
    vs: tuple = ()
    w0: float | None = None
    series: str = ""
    timing: bool = False
    settings: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        if not self.grid:
            raise ParameterError("sweep grid is empty")
        if self.key not in CONFIG_KEYS:
            raise ParameterError(f"unknown sweep key {self.key!r}")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad or not self.outputs:
            raise ParameterError(f"unknown outputs {bad}; choose from {', '.join(OUTPUTS)}")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ParameterError(f"methods must be among {METHODS}")
        if any(o in LAPLACE_OUTPUTS for o in self.outputs) and not self.vs:
            raise ParameterError("Laplace outputs need a list of arguments (--v)")
        if self.key != "gamma_db" and not self.gammas_db:
            raise ParameterError("empty SINR threshold list")
        for value in self.grid:
            with_overrides(self.base, {self.key: value})

    def point_params(self, value) -> NetworkParams:
        return with_overrides(self.base, {self.key: value})


# --- memoised evaluations (per process) ---------------------------------------------

_IRRELEVANT = dict(gamma=1.0, delta=0.0, w_c=0.6, w_d=0.4)


def _outage_key(params: NetworkParams) -> NetworkParams:
    # the outage does not read the stored threshold or the partition settings
    return params.replace(**_IRRELEVANT)


@lru_cache(maxsize=None)
def _p_d2d_cached(lambda_b, sigma_d_sq, ball_c, ball_d, alpha, t_d, settings):
    params = NetworkParams(lambda_b=lambda_b, sigma_d_sq=sigma_d_sq, los_ball_c=ball_c,
                           los_ball_d=ball_d, alpha=alpha, t_d=t_d)
    return analysis.p_d2d(params, settings=settings)


def analytic_p_d2d(params: NetworkParams, settings: QuadratureSettings) -> float:
    return _p_d2d_cached(params.lambda_b, params.sigma_d_sq, params.los_ball_c,
                         params.los_ball_d, params.alpha, params.t_d, settings)


@lru_cache(maxsize=None)
def _outage_cached(mode, gamma, params, p_val, settings):
    return analysis.outage_with_beam_error(gamma, mode, params, p_val, settings=settings).value


def analytic_outage(mode: str, gamma: float, params: NetworkParams, p_val: float,
                    settings: QuadratureSettings) -> float:
    return _outage_cached(mode, float(gamma), _outage_key(params), float(p_val), settings)


def clear_caches():
    _p_d2d_cached.cache_clear()
    _outage_cached.cache_clear()


# --- one grid point -------------------------------------------------------------------

class _Point:
    """Lazily computed quantities shared by the rows of one grid point."""

    def __init__(self, spec: SweepSpec, params: NetworkParams, gammas_db):
        self.spec = spec
        self.params = params
        self.gammas_db = list(gammas_db)
        self._memo = {}

    def get(self, key, fn):
        if key not in self._memo:
            try:
                self._memo[key] = (fn(), None)
            except Exception as exc:  # noqa: BLE001  recorded in the row's error column
                self._memo[key] = (None, exc)
        value, exc = self._memo[key]
        if exc is not None:
            raise exc
        return value

    def p_d2d(self):
        return self.get("p_d2d", lambda: analytic_p_d2d(self.params, self.spec.settings))

    def mc_p_d2d(self):
        return self.get("mc_p_d2d", lambda: simulate_p_d2d(self.params, self.spec.mc))

    def outage(self, mode, gamma_db, params=None):
        params = self.params if params is None else params
        return analytic_outage(mode, db_to_linear(gamma_db), params, self.p_d2d(),
                               self.spec.settings)

    def mc_outages(self, mode, params=None):
        params = self.params if params is None else params
        gammas = [db_to_linear(g) for g in self.gammas_db]
        return self.get(("mc", mode, params.beta), lambda: simulate_outage_curve(
            mode, gammas, params, self.p_d2d(), self.spec.mc))

    def mc_outage(self, mode, gamma_db, params=None) -> McEstimate:
        return self.mc_outages(mode, params)[self.gammas_db.index(gamma_db)]

    def rate_terms(self, gamma_db, method):
        """(cellular rate, D2D rate, their standard errors) per unit bandwidth.

        The configured beta picks the sharing scheme: 1 underlay, 0 overlay.
        """
        p = self.params
        gamma = db_to_linear(gamma_db)
        if method == "analytic":
            oc, od = self.outage("cellular", gamma_db, p), self.outage("d2d", gamma_db, p)
            se_c = se_d = 0.0
        else:
            ec, ed = self.mc_outage("cellular", gamma_db, p), self.mc_outage("d2d", gamma_db, p)
            oc, od, se_c, se_d = ec.mean, ed.mean, ec.std_err, ed.std_err
        res = analysis.ase_from_outages(gamma, p, self.p_d2d(), oc, od, "underlay")
        bits = math.log2(1 + gamma)
        scale_c = p.lambda_b * bits
        scale_d = p.n_bar * self.p_d2d() * p.lambda_c * bits
        return res.cellular_term, res.d2d_term, scale_c * se_c, scale_d * se_d

    def value(self, output, method, gamma_db=None, v=None):
        """Returns (value, std_err); std_err is None for analytic rows."""
        p = self.params
        if output == "p_d2d":
            if method == "analytic":
                return self.p_d2d(), None
            est = self.mc_p_d2d()
            return est.mean, est.std_err
        if output in ("outage_c", "outage_d"):
            mode = "cellular" if output == "outage_c" else "d2d"
            if method == "analytic":
                return self.outage(mode, gamma_db), None
            est = self.mc_outage(mode, gamma_db)
            return est.mean, est.std_err
        if output == "ase":
            cell, d2d, se_c, se_d = self.rate_terms(gamma_db, method)
            if p.beta == 1:
                val, se = cell + d2d, math.hypot(se_c, se_d)
            else:
                val = (1 - p.delta) * cell + p.delta * d2d
                se = math.hypot((1 - p.delta) * se_c, p.delta * se_d)
            return val, (se if method == "mc" else None)
        if output == "pf_objective":
            cell, d2d, se_c, se_d = self.rate_terms(gamma_db, method)
            val = analysis.pf_objective(p.delta, cell, d2d, p.w_c, p.w_d)
            se = math.hypot(p.w_c * se_c / cell, p.w_d * se_d / d2d) if cell > 0 and d2d > 0 \
                else float("nan")
            return val, (se if method == "mc" else None)
        kind = LaplaceKind.parse(output[len("laplace_"):])
        w0 = self.spec.w0 if self.spec.w0 is not None else p.sigma_d
        if method == "analytic":
            return analysis.laplace(kind, v, p, self.p_d2d(), w0,
                                    settings=self.spec.settings), None
        ests = self.get(("mc_laplace", kind), lambda: simulate_laplace_curve(
            kind, list(self.spec.vs), p, self.p_d2d(), self.spec.mc, w0))
        est = ests[list(self.spec.vs).index(v)]
        return est.mean, est.std_err


def evaluate_point(spec: SweepSpec, value) -> list[dict]:
    params = spec.point_params(value)
    gammas_db = [float(value)] if spec.key == "gamma_db" else list(spec.gammas_db)
    point = _Point(spec, params, gammas_db)
    rows = []
    for output in spec.outputs:
        for method in spec.methods:
            if output in LAPLACE_OUTPUTS:
                cells = [(None, v) for v in spec.vs]
            else:
                cells = [(g, None) for g in gammas_db]
            for gamma_db, v in cells:
                row = {"swept_key": spec.key, "swept_value": fmt(value),
                       "gamma_db": fmt(gamma_db), "output": output, "method": method,
                       "value": "", "std_err": "", "wall_ms": "", "series": spec.series,
                       "v": fmt(v), "error": ""}
                start = time.perf_counter()
                try:
                    val, se = point.value(output, method, gamma_db, v)
                    row["value"], row["std_err"] = fmt(val), fmt(se)
                except Exception as exc:  # noqa: BLE001  one bad row must not stop the sweep
                    row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
                if spec.timing:
                    row["wall_ms"] = format(1e3 * (time.perf_counter() - start), ".1f")
                rows.append(row)
    return rows


def _evaluate_quiet(spec, value):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return evaluate_point(spec, value)


def run_sweep(spec: SweepSpec, workers: int = 1, quiet: bool = False) -> list[dict]:
    """All rows of the sweep, in grid order.

    With ``workers > 1`` grid points run in separate processes; Monte Carlo
    blocks inside a point then run serially.  Seeding is per block, so the rows
    do not depend on the worker count.
    """
    fn = _evaluate_quiet if quiet else evaluate_point
    if workers > 1 and len(spec.grid) > 1:
        inner = replace(spec, mc=replace(spec.mc, workers=1))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(partial(fn, inner), spec.grid))
    else:
        spec = replace(spec, mc=replace(spec.mc, workers=workers)) if workers > 1 else spec
        chunks = [fn(spec, value) for value in spec.grid]
    return [row for chunk in chunks for row in chunk]


# --- CSV I/O ----------------------------------------------------------------------------

def write_csv(rows, stream, header_lines=()):
    for line in header_lines:
        stream.write(f"# {line}\n" if line else "#\n")
    writer = csv.DictWriter(stream, fieldnames=COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in COLUMNS})


def rows_to_csv(rows, header_lines=()) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, header_lines)
    return buf.getvalue()


def read_csv(stream) -> list[dict]:
    lines = [line for line in stream if not line.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in COLUMNS[:8] if c not in (reader.fieldnames or [])]
    if missing:
        raise ParameterError(f"CSV lacks columns {missing}")
    return list(reader)


# --- comparison -------------------------------------------------------------------------

ROW_KEY = ("series", "swept_key", "swept_value", "gamma_db", "output", "v")


def row_key(row) -> tuple:
    return tuple(row.get(k, "") or "" for k in ROW_KEY)


@dataclass
class ComparisonRow:
    key: tuple
    analytic: float
    mc: float
    std_err: float
    gap: float
    allowed: float
    ratio: float
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and self.gap <= self.allowed


@dataclass
class ComparisonReport:
    rows: list
    abs_tol: float
    rel_tol: float

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)

    def worst(self, n=5):
        def badness(r):
            return math.inf if r.error else r.gap / r.allowed if r.allowed > 0 else math.inf
        return sorted(self.rows, key=badness, reverse=True)[:n]

    def summary(self) -> str:
        n_fail = sum(not r.passed for r in self.rows)
        lines = [f"compared {len(self.rows)} rows: {n_fail} outside tolerance "
                 f"(max(abs {self.abs_tol}, 3 SE); rate outputs relative {self.rel_tol})"]
        for r in self.worst():
            label = " ".join(f"{k}={v}" for k, v in zip(ROW_KEY, r.key) if v)
            status = "ok  " if r.passed else "FAIL"
            detail = r.error or (f"analytic={r.analytic:.6g} mc={r.mc:.6g} gap={r.gap:.3g} "
                                 f"gap/SE={r.ratio:.3g} allowed={r.allowed:.3g}")
            lines.append(f"  {status} {label}: {detail}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _num(text):
    return float(text) if text not in ("", None) else math.nan


def _pick(rows, method):
    rows = list(rows)
    chosen = [r for r in rows if r["method"] == method]
    return chosen if chosen and len(chosen) < len(rows) else rows


def compare_rows(analytic_rows, mc_rows, abs_tol=0.03, rel_tol=0.03) -> ComparisonReport:
    """Pair rows by key and test |analytic - mc| <= max(tolerance, 3 SE).

    A file holding both methods contributes its analytic rows as the first
    argument and its simulated rows as the second.  Raises ParameterError when
    the two key sets differ.
    """
    analytic_rows = _pick(analytic_rows, "analytic")
    mc_rows = _pick(mc_rows, "mc")
    a = {row_key(r): r for r in analytic_rows}
    m = {row_key(r): r for r in mc_rows}
    if len(a) != len(analytic_rows) or len(m) != len(mc_rows):
        raise ParameterError("duplicate row keys; compare one method per file")
    if set(a) != set(m):
        only_a, only_m = sorted(set(a) - set(m)), sorted(set(m) - set(a))
        raise ParameterError(f"row keys differ: {len(only_a)} only in the first file, "
                             f"{len(only_m)} only in the second"
                             + f" (e.g. {(only_a or only_m)[0]})")
    out = []
    for key, ra in a.items():
        rm = m[key]
        err = ra.get("error") or rm.get("error") or ""
        va, vm, se = _num(ra["value"]), _num(rm["value"]), _num(rm["std_err"])
        se = 0.0 if math.isnan(se) else se
        gap = abs(va - vm)
        tol = rel_tol * abs(va) if ra["output"] in RELATIVE_OUTPUTS else abs_tol
        allowed = max(tol, 3 * se)
        ratio = gap / se if se > 0 else (0.0 if gap == 0 else math.inf)
        if not err and math.isnan(gap):
            err = "missing value"
        out.append(ComparisonRow(key, va, vm, se, gap, allowed, ratio, err))
    return ComparisonReport(out, abs_tol, rel_tol)


def split_methods(rows):
    analytic = [r for r in rows if r["method"] == "analytic"]
    mc = [r for r in rows if r["method"] == "mc"]
    return analytic, mc
