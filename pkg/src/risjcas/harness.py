"""Scenario files, seeded Monte-Carlo trials and sweeps, CSV/JSON emission.

Config files are flat ``key = value`` text, one key per line, ``#`` starts a
comment. Scenario keys use the usual engineering units (``p_max_dbm``,
``snr_db``, ``gamma_db``); see :data:`CONFIG_KEYS`. Sweep files use the same
format plus ``axis``, ``values``, ``trials`` and ``schemes``.

Trial seeds: trial ``i`` of a scenario with base seed ``s`` uses the
``(i+1)``-th output of a SplitMix64 generator started at ``s``. Every scheme
run for that trial shares the channel draw and the reference pattern.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import SchemeId, run_scheme
from .manifold import RcgSettings
from .model import ScenarioConfig, sample_channels
from .refbp import design_reference

__all__ = [
    "CONFIG_KEYS",
    "SWEEP_AXES",
    "CSV_HEADER",
    "MetricsRow",
    "SweepSpec",
    "SweepResult",
    "splitmix64",
    "trial_seed",
    "parse_kv",
    "load_config",
    "bundled_config",
    "config_from_dict",
    "apply_axis",
    "run_trial",
    "run_sweep",
    "summarize",
    "emit",
    "read_csv",
]

MASK64 = (1 << 64) - 1

SWEEP_AXES = ("n_users", "n_ris", "sinr_threshold_db", "snr_db", "n_rf")

CSV_HEADER = (
    "scheme,seed,axis,k,r,n_rf,gamma_db,snr_db,bp_mse_db,pslr_db,"
    "feasibility,avg_sinr_db,admm_iters,runtime_s"
)

_INT_KEYS = {
    "n_tx", "n_rf", "n_sc", "n_users", "n_ris", "n_angles", "n_clusters", "n_paths",
    "admm_max_iters", "ref_rounds", "base_seed", "rcg_max_iters", "rcg_max_backtracks", "symbol_length",
}
_FLOAT_KEYS = {
    "p_max_dbm", "snr_db", "gamma_db", "lobe_halfwidth", "admm_tol", "gain_bs_ue_db", "gain_bs_ris_db",
    "gain_ris_ue_db", "penalty_scale", "sinr_margin_db", "subcarrier_spacing", "rcg_grad_tol",
}
_STR_KEYS = {"penalty_form"}
_LIST_KEYS = {"target_angles"}
CONFIG_KEYS = tuple(sorted(_INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS))
REQUIRED_KEYS = ("n_tx", "n_rf", "n_sc", "n_users", "n_ris")
_SWEEP_KEYS = {"axis", "values", "trials", "schemes"}


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def trial_seed(base_seed: int, trial_index: int) -> int:
    """``(trial_index+1)``-th SplitMix64 output from ``base_seed`` (closed form, O(1))."""
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    state = (int(base_seed) + trial_index * 0x9E3779B97F4A7C15) & MASK64
    return splitmix64(state)[1]


# --------------------------------------------------------------------------- config files


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _parse_list(val: str, cast=float) -> list:
    return [cast(x) for x in val.replace("[", "").replace("]", "").split(",") if x.strip()]


def _coerce(key: str, val):
    if not isinstance(val, str):
        return val
    if key in _INT_KEYS:
        return int(val, 0)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _LIST_KEYS:
        return tuple(_parse_list(val))
    return val


def config_from_dict(d: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from file-style keys (strings or values)."""
    unknown = set(d) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in d]
    if missing:
        raise ValueError(f"missing required config keys: {missing}")
    kv = {k: _coerce(k, v) for k, v in d.items()}
    rcg_kw = {}
    for key, name in (("rcg_max_iters", "max_iters"), ("rcg_grad_tol", "grad_tol"),
                      ("rcg_max_backtracks", "max_backtracks")):
        if key in kv:
            rcg_kw[name] = kv.pop(key)
    if rcg_kw:
        kv["rcg"] = RcgSettings(**rcg_kw)
    return ScenarioConfig.build(**kv)


def bundled_config(name: str) -> dict[str, str]:
    """Key-value pairs of a shipped scenario (``full`` or ``desk``)."""
    text = resources.files("risjcas").joinpath("configs", f"{name}.cfg").read_text()
    return parse_kv(text)


def load_config(path=None, *, desk: bool = False, overrides: dict | None = None) -> ScenarioConfig:
    """Bundled full-scale (or desk) defaults, then the file at ``path``, then ``overrides``."""
    d = bundled_config("desk" if desk else "full")
    if path is not None:
        d.update({k: v for k, v in parse_kv(Path(path).read_text()).items() if k not in _SWEEP_KEYS})
    d.update(overrides or {})
    return config_from_dict(d)


def config_to_dict(config: ScenarioConfig) -> dict:
    """File-style keys reproducing ``config`` (uniform threshold assumed)."""
    thr = config.sinr_threshold
    if not np.all(thr == thr.flat[0]):
        raise ValueError("per-(user, subcarrier) thresholds have no file representation")
    d = {k: getattr(config, k) for k in sorted(_INT_KEYS | _FLOAT_KEYS | _STR_KEYS) if hasattr(config, k)}
    d.update(
        target_angles=config.target_angles,
        p_max_dbm=10 * math.log10(config.p_max) + 30,
        snr_db=config.snr_db,
        gamma_db=config.gamma_db,
        n_angles=config.n_angles,
        rcg_max_iters=config.rcg.max_iters,
        rcg_grad_tol=config.rcg.grad_tol,
        rcg_max_backtracks=config.rcg.max_backtracks,
    )
    return d


def apply_axis(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """``config`` with the sweep ``axis`` set to ``value``."""
    if axis == "n_users":
        return config.replace(n_users=int(value))
    if axis == "n_ris":
        return config.replace(n_ris=int(value))
    if axis == "n_rf":
        return config.replace(n_rf=int(value))
    if axis == "snr_db":
        return config.replace(noise_var=config.p_max / 10.0 ** (float(value) / 10.0))
    if axis == "sinr_threshold_db":
        thr = np.full((config.n_users, config.n_sc), 10.0 ** (float(value) / 10.0))
        return config.replace(sinr_threshold=thr)
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    axis: str
    values: tuple
    trials: int = 20
    schemes: tuple = (SchemeId.PROPOSED,)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if len(self.values) == 0:
            raise ValueError("sweep values must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.schemes) == 0:
            raise ValueError("at least one scheme is required")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(SchemeId(s) for s in self.schemes))

    @classmethod
    def from_file(cls, path, *, desk: bool = False, overrides: dict | None = None) -> "SweepSpec":
        d = parse_kv(Path(path).read_text())
        missing = {"axis", "values"} - set(d)
        if missing:
            raise ValueError(f"sweep file lacks {sorted(missing)}")
        base = load_config(path, desk=desk, overrides=overrides)
        return cls(
            base=base,
            axis=d["axis"],
            values=tuple(_parse_list(d["values"])),
            trials=int(d.get("trials", 20)),
            schemes=tuple(s.strip() for s in d.get("schemes", "proposed").split(",") if s.strip()),
        )


@dataclass
class MetricsRow:
    scheme: str
    seed: int
    axis: float
    k: int
    r: int
    n_rf: int
    gamma_db: float
    snr_db: float
    bp_mse_db: float = math.nan
    pslr_db: float = math.nan
    feasibility: float = math.nan
    avg_sinr_db: float = math.nan
    admm_iters: int = 0
    runtime_s: float = 0.0
    error: str | None = field(default=None, compare=False)

    @property
    def failed(self) -> bool:
        return self.error is not None


def _row(config: ScenarioConfig, scheme, seed: int, axis_value, metrics=None, error=None, runtime=0.0):
    row = MetricsRow(
        scheme=str(SchemeId(scheme)),
        seed=int(seed),
        axis=float(axis_value) if axis_value is not None else math.nan,
        k=config.n_users,
        r=config.n_ris,
        n_rf=config.n_rf,
        gamma_db=config.gamma_db,
        snr_db=config.snr_db,
        runtime_s=runtime,
        error=error,
    )
    if metrics is not None:
        row.bp_mse_db = float(metrics["bp_mse_db"])
        row.pslr_db = float(metrics["pslr_db"])
        row.feasibility = float(metrics["feasibility"])
        row.avg_sinr_db = float(metrics["avg_sinr_db"])
        row.admm_iters = int(metrics["iterations"])
    return row


def _trial_rows(config: ScenarioConfig, schemes, trial_index: int, axis_value=None) -> list[MetricsRow]:
    """All schemes on one shared channel draw and reference pattern."""
    seed = trial_seed(config.base_seed, trial_index)
    try:
        ch = sample_channels(config, seed)
        ref = design_reference(config, ch, seed)
    except Exception as exc:  # recorded, not raised: one bad draw must not abort a sweep
        return [_row(config, s, seed, axis_value, error=f"{type(exc).__name__}: {exc}") for s in schemes]
    rows = []
    for s in schemes:
        t0 = time.perf_counter()
        try:
            m = run_scheme(s, config, ch, ref, seed)
            rows.append(_row(config, s, seed, axis_value, m, runtime=time.perf_counter() - t0))
        except Exception as exc:
            rows.append(_row(config, s, seed, axis_value, error=f"{type(exc).__name__}: {exc}",
                             runtime=time.perf_counter() - t0))
    return rows


def run_trial(config: ScenarioConfig, scheme, trial_index: int, axis_value=None) -> MetricsRow:
    """One scheme on trial ``trial_index`` of ``config``; failures become marked rows."""
    return _trial_rows(config, (SchemeId(scheme),), trial_index, axis_value)[0]


@dataclass
class SweepResult:
    rows: list[MetricsRow]
    summary: list[dict]


def _job(args):
    config, schemes, trial_index, value = args
    return _trial_rows(config, schemes, trial_index, value)


def run_sweep(spec: SweepSpec, parallel: int = 1) -> SweepResult:
    """``len(values) * trials * len(schemes)`` rows, ordered by (value, trial, scheme).

    Trials may run in worker processes; each owns its seed and the rows are
    placed by index, so the output does not depend on ``parallel``.
    """
    jobs = [
        (apply_axis(spec.base, spec.axis, v), spec.schemes, i, v)
        for v in spec.values
        for i in range(spec.trials)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_job, jobs))
    else:
        chunks = [_job(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    return SweepResult(rows=rows, summary=summarize(rows))


_SUMMARY_FIELDS = ("bp_mse_db", "pslr_db", "feasibility", "avg_sinr_db", "admm_iters", "runtime_s")


def summarize(rows: list[MetricsRow]) -> list[dict]:
    """Mean and (population) standard deviation per (axis value, scheme), skipping failed rows."""
    groups: dict[tuple, list[MetricsRow]] = {}
    for r in rows:
        groups.setdefault((r.axis, r.scheme), []).append(r)
    out = []
    for (axis, scheme), grp in groups.items():
        ok = [r for r in grp if not r.failed]
        rec = {"scheme": scheme, "axis": axis, "trials": len(grp), "failed": len(grp) - len(ok)}
        for name in _SUMMARY_FIELDS:
            vals = np.array([getattr(r, name) for r in ok], dtype=float)
            rec[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
            rec[f"{name}_std"] = float(vals.std()) if vals.size else math.nan
        out.append(rec)
    return out


# --------------------------------------------------------------------------- emission


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".9g")


def emit(rows, path, fmt: str = "csv") -> None:
    """Write rows as CSV (fixed header, 9 significant digits) or a JSON array of records."""
    cols = CSV_HEADER.split(",")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([r.scheme] + [_fmt(getattr(r, c)) for c in cols[1:]])
    elif fmt == "json":
        recs = []
        for r in rows:
            rec = {c: getattr(r, c) for c in cols}
            rec = {c: (None if isinstance(v, float) and not math.isfinite(v) else v) for c, v in rec.items()}
            if r.failed:
                rec["error"] = r.error
            recs.append(rec)
        with open(path, "w") as fh:
            json.dump(recs, fh, indent=1)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_csv(path) -> list[MetricsRow]:
    """Parse a CSV written by :func:`emit`."""
    types = {f.name: f.type for f in fields(MetricsRow)}
    rows = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if ",".join(rd.fieldnames or []) != CSV_HEADER:
            raise ValueError("unexpected CSV header")
        for rec in rd:
            kw = {}
            for c, v in rec.items():
                t = types[c]
                kw[c] = v if t == "str" else (int(v) if t == "int" else float(v))
            rows.append(MetricsRow(**kw))
    return rows


def row_dict(row: MetricsRow) -> dict:
    d = asdict(row)
    if d["error"] is None:
        d.pop("error")
    return d
