"""Parameter sweeps over ``(V, kappa)``: threshold times, transacylation
fractions and relative time changes against the ``kappa = 0`` baseline."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrator import Event, IntegrationError, IntegratorConfig
from .kinetics import ModelParams, simulate, transacylation_fraction

SPECIES = ("s", "p", "f")
_COLUMN = {"s": 0, "p": 2, "f": 3}
METRICS = (
    "t_s_pct", "t_p_pct", "t_f_pct",
    "ta_fraction_s", "ta_fraction_p", "ta_fraction_f",
    "rel_change_s", "rel_change_p", "rel_change_f",
)
ALIASES = {"ta_fraction": "ta_fraction_s"}
SCHEMA = 1

OK = "ok"
NOT_REACHED = "not_reached"
BASELINE_NOT_REACHED = "baseline_not_reached"
FAILED = "failed"


def canonical_metric(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in METRICS:
        raise ValueError(f"unknown metric {name!r}; expected one of {METRICS + tuple(ALIASES)}")
    return name


def _check_axis(values, name, allow_zero):
    arr = tuple(float(v) for v in values)
    if not arr:
        raise ValueError(f"{name} grid is empty")
    if any(b <= a for a, b in zip(arr, arr[1:])):
        raise ValueError(f"{name} grid must be strictly increasing")
    lo = arr[0]
    if lo < 0 or (lo == 0 and not allow_zero) or not all(map(math.isfinite, arr)):
        raise ValueError(f"{name} values must be finite and {'nonnegative' if allow_zero else 'positive'}")
    return arr


@dataclass(frozen=True)
class SweepGrid:
    v_values: tuple
    kappa_values: tuple
    K: float = 1.0
    L: float = 1.0
    q0: float = 0.0
    thresholds: tuple = (50.0,)

    def __post_init__(self):
        object.__setattr__(self, "v_values", _check_axis(self.v_values, "V", False))
        object.__setattr__(self, "kappa_values", _check_axis(self.kappa_values, "kappa", True))
        th = tuple(float(x) for x in self.thresholds)
        if not th or not all(0 < x < 100 for x in th):
            raise ValueError("thresholds must be percentages in (0, 100)")
        object.__setattr__(self, "thresholds", th)
        ModelParams(self.K, self.L, 1.0, 0.0, self.q0)

    @classmethod
    def logspace(cls, log10_v=(-2.0, 2.0), log10_kappa=(-2.0, 2.0), n_v=41, n_kappa=41, **kw):
        """Grid evenly spaced in decimal log (default 41 x 41 over [-2, 2]^2)."""
        return cls(
            tuple(10.0 ** np.linspace(*log10_v, n_v)),
            tuple(10.0 ** np.linspace(*log10_kappa, n_kappa)),
            **kw,
        )

    @property
    def shape(self):
        return (len(self.v_values), len(self.kappa_values))

    def params(self, V, kappa) -> ModelParams:
        return ModelParams(self.K, self.L, V, kappa, self.q0)

    def as_dict(self) -> dict:
        return {
            "v_values": list(self.v_values),
            "kappa_values": list(self.kappa_values),
            "K": self.K,
            "L": self.L,
            "q0": self.q0,
            "thresholds": list(self.thresholds),
        }


@dataclass
class MetricMap:
    """Values on a ``(V, kappa)`` grid; rows index ``V``, columns ``kappa``.

    Cells whose value could not be computed hold NaN and a status other
    than ``"ok"``.
    """

    metric: str
    threshold: float
    v_values: np.ndarray
    kappa_values: np.ndarray
    values: np.ndarray
    status: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return int(np.sum(self.status == FAILED))

    def rows(self):
        for i, V in enumerate(self.v_values):
            for j, k in enumerate(self.kappa_values):
                yield _log10(V), _log10(k), float(self.values[i, j]), str(self.status[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log10_V", "log10_kappa", "value", "status"])
        for lv, lk, val, st in self.rows():
            w.writerow([fmt(lv), fmt(lk), fmt(val), st])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "metric": self.metric,
            "threshold": self.threshold,
            "log10_V": [fmt(_log10(v)) for v in self.v_values],
            "log10_kappa": [fmt(_log10(k)) for k in self.kappa_values],
            "values": [[fmt(x) for x in row] for row in self.values],
            "status": self.status.tolist(),
            "meta": self.meta,
        }


def fmt(x: float) -> str:
    """Lossless 17-significant-digit rendering."""
    return format(float(x), ".17g")


def _log10(x: float) -> float:
    return math.log10(x) if x > 0 else float("-inf")


# -- single-run metrics --------------------------------------------------


def threshold_level(params: ModelParams, species: str, pct: float) -> float:
    """Concentration marking ``pct`` percent progress for ``species``.

    TG counts as processed once it falls to ``1 - pct/100``; the products
    count as produced once they reach ``pct/100`` of their final amounts
    ``p_inf = 1 + q0/L`` and ``f_inf = 2 + q0/L``.
    """
    if not 0 < pct < 100:
        raise ValueError("percentage must lie in (0, 100)")
    x = pct / 100.0
    if species == "s":
        return 1.0 - x
    if species == "p":
        return x * (1.0 + params.q0 / params.L)
    if species == "f":
        return x * (2.0 + params.q0 / params.L)
    raise ValueError(f"unknown species {species!r}")


def threshold_event(params: ModelParams, species: str, pct: float, label: str | None = None) -> Event:
    level = threshold_level(params, species, pct)
    col = _COLUMN[species]
    direction = -1 if species == "s" else 1
    return Event(label or f"{species}@{pct:g}", lambda y: y[col] - level, direction)


@dataclass(frozen=True)
class ThresholdHit:
    time: float | None
    fraction: float | None


def run_thresholds(params: ModelParams, targets, cfg: IntegratorConfig | None = None) -> dict:
    """Locate every ``(species, pct)`` target in one integration.

    Returns ``{target: ThresholdHit}``; unreached targets have ``time=None``.
    """
    cfg = cfg or IntegratorConfig(t_end=1000.0)
    targets = list(dict.fromkeys(targets))
    events = [threshold_event(params, sp, pct, f"{sp}@{pct!r}") for sp, pct in targets]
    traj = simulate(params, cfg, events, stop_after_events=True)
    out = {}
    for (sp, pct), ev in zip(targets, events):
        rec = traj.event(ev.label)
        if rec is None:
            out[(sp, pct)] = ThresholdHit(None, None)
        else:
            out[(sp, pct)] = ThresholdHit(rec.time, transacylation_fraction(float(rec.state[1]), params.kappa))
    return out


def time_to_threshold(params: ModelParams, target, cfg: IntegratorConfig | None = None) -> float | None:
    """Time at which ``target = (species, pct)`` is met, or ``None``."""
    return run_thresholds(params, [tuple(target)], cfg)[tuple(target)].time


def fraction_at_event(params: ModelParams, target, cfg: IntegratorConfig | None = None) -> float | None:
    """Share of DG turnover due to transacylation when ``target`` is met."""
    return run_thresholds(params, [tuple(target)], cfg)[tuple(target)].fraction


def relative_change(params: ModelParams, target, cfg: IntegratorConfig | None = None) -> float:
    """``(t_kappa - t_0) / t_0`` for one threshold target."""
    t_k = time_to_threshold(params, target, cfg)
    t_0 = time_to_threshold(params.replace(kappa=0.0), target, cfg)
    if t_0 is None:
        raise ValueError("baseline (kappa=0) threshold not reached")
    if t_k is None:
        raise ValueError("threshold not reached")
    return (t_k - t_0) / t_0


# -- sweeps --------------------------------------------------------------


def _row(args):
    grid, V, targets, cfg = args
    base = _safe_thresholds(grid.params(V, 0.0), targets, cfg)
    cells = [base if k == 0.0 else _safe_thresholds(grid.params(V, k), targets, cfg) for k in grid.kappa_values]
    return base, cells


def _safe_thresholds(params, targets, cfg):
    try:
        return run_thresholds(params, targets, cfg)
    except (IntegrationError, ArithmeticError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _cell_value(metric, hits, base, key):
    if isinstance(hits, str):
        return math.nan, FAILED
    hit = hits[key]
    if hit.time is None:
        return math.nan, NOT_REACHED
    if metric.startswith("t_"):
        return hit.time, OK
    if metric.startswith("ta_"):
        return hit.fraction, OK
    if isinstance(base, str):
        return math.nan, FAILED
    b = base[key].time
    if b is None:
        return math.nan, BASELINE_NOT_REACHED
    return (hit.time - b) / b, OK


def _metric_species(metric: str) -> str:
    return metric.split("_")[1] if metric.startswith("t_") else metric[-1]


def run_sweep(grid: SweepGrid, metrics, cfg: IntegratorConfig | None = None, threads: int = 1) -> list:
    """Evaluate ``metrics`` at every threshold on every grid cell.

    Returns one :class:`MetricMap` per ``(metric, threshold)`` pair.  Cell
    failures are recorded in the status array and ``meta`` and never abort
    the sweep.  ``threads > 1`` distributes rows of constant ``V`` over
    worker processes; results do not depend on the worker count.
    """
    cfg = cfg or IntegratorConfig(t_end=1000.0)
    metrics = [canonical_metric(m) for m in metrics]
    if not metrics:
        raise ValueError("no metrics requested")
    if threads < 1:
        raise ValueError("threads must be at least 1")
    targets = sorted({(_metric_species(m), th) for m in metrics for th in grid.thresholds})
    jobs = [(grid, V, targets, cfg) for V in grid.v_values]
    if threads == 1:
        rows = [_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_row, jobs))

    failures = []
    for i, (base, cells) in enumerate(rows):
        for j, hits in enumerate(cells):
            if isinstance(hits, str):
                failures.append({"V": grid.v_values[i], "kappa": grid.kappa_values[j], "error": hits})

    meta = {
        "grid": grid.as_dict(),
        "integrator": {"rtol": cfg.rtol, "atol": cfg.atol, "t_end": cfg.t_end, "method": cfg.method},
        "failures": failures,
    }
    maps = []
    for metric in metrics:
        sp = _metric_species(metric)
        for th in grid.thresholds:
            vals = np.full(grid.shape, math.nan)
            stat = np.full(grid.shape, OK, dtype=object)
            for i, (base, cells) in enumerate(rows):
                for j, hits in enumerate(cells):
                    vals[i, j], stat[i, j] = _cell_value(metric, hits, base, (sp, th))
            maps.append(MetricMap(metric, th, np.array(grid.v_values), np.array(grid.kappa_values),
                                  vals, stat.astype(str), dict(meta)))
    return maps


# -- staged percentages at fixed kappa -----------------------------------


@dataclass
class StagedCurves:
    """Relative time changes over ``V`` at several progress stages.

    ``values[species]`` has shape ``(len(percents), len(v_values))``.
    """

    kappa: float
    v_values: np.ndarray
    percents: tuple
    product_percents: tuple
    values: dict
    status: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["species", "percent", "log10_V", "value", "status"])
        for sp in SPECIES:
            pcts = self.percents if sp == "s" else self.product_percents
            for a, pct in enumerate(pcts):
                for b, V in enumerate(self.v_values):
                    w.writerow([sp, fmt(pct), fmt(_log10(V)), fmt(self.values[sp][a, b]), self.status[sp][a, b]])
        return buf.getvalue()


def staged_curves(
    v_values,
    kappa: float = 10.0,
    percents=(10, 25, 50, 75, 90),
    *,
    K: float = 1.0,
    L: float = 1.0,
    q0: float = 0.0,
    products: str = "complement",
    cfg: IntegratorConfig | None = None,
) -> StagedCurves:
    """Relative time change versus ``kappa = 0`` at staged progress levels.

    TG uses ``x`` percent processed.  By default MG and FA use the matching
    ``100 - x`` percent produced; ``products="same"`` uses ``x`` for all.
    """
    if products not in ("same", "complement"):
        raise ValueError("products must be 'same' or 'complement'")
    cfg = cfg or IntegratorConfig(t_end=1000.0)
    v_values = np.asarray(_check_axis(v_values, "V", False))
    percents = tuple(float(x) for x in percents)
    prod = percents if products == "same" else tuple(100.0 - x for x in percents)
    targets = [("s", x) for x in percents] + [(sp, x) for sp in ("p", "f") for x in prod]
    values = {sp: np.full((len(percents), len(v_values)), math.nan) for sp in SPECIES}
    status = {sp: np.full((len(percents), len(v_values)), OK, dtype=object) for sp in SPECIES}
    for b, V in enumerate(v_values):
        p = ModelParams(K, L, V, kappa, q0)
        hits = _safe_thresholds(p, targets, cfg)
        base = _safe_thresholds(p.replace(kappa=0.0), targets, cfg)
        for sp in SPECIES:
            pcts = percents if sp == "s" else prod
            for a, x in enumerate(pcts):
                values[sp][a, b], status[sp][a, b] = _cell_value("rel_change_" + sp, hits, base, (sp, x))
    return StagedCurves(kappa, v_values, percents, prod, values,
                        {sp: st.astype(str) for sp, st in status.items()})


# -- serialisation -------------------------------------------------------


def maps_to_json(maps, extra_meta: dict | None = None) -> str:
    doc = {"schema": SCHEMA, "maps": [m.to_json_dict() for m in maps]}
    if extra_meta:
        doc["meta"] = extra_meta
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def gnuplot_script(csv_path: str, title: str) -> str:
    """Heat-map script for a MetricMap CSV written by :meth:`MetricMap.to_csv`."""
    return (
        "set datafile separator ','\n"
        f"set title {json.dumps(title)}\n"
        "set xlabel 'log10 V'\n"
        "set ylabel 'log10 kappa'\n"
        "set view map\n"
        "set pm3d map\n"
        f"splot {json.dumps(csv_path)} every ::1 using 1:2:3 with points palette pointsize 2 pt 5 notitle\n"
    )
