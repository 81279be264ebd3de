"""Config-driven experiment runner.

Turns a declarative experiment description (TOML file, dict, or preset name)
into simulated ensembles, fitted decay rates or stationarity z-scores, theory
comparison columns, and CSV/JSON reports.  Chains are seeded independently
from a master seed, so any run is reproducible bit for bit; report rows are
assembled in a fixed order regardless of how workers interleave.
"""

import copy
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import diagnostics as dg
from . import rates
from . import spectral
from .potentials import (DOUBLE_WELL_POINCARE, Product1DPotential,
                         QuadraticPotential, diagonal_gaussian,
                         double_well_factor, isotropic_gaussian)
from .samplers import PROCESSES, simulate, stationary_state
from .seeding import chain_rng

# chains per work unit; fixed so reports do not depend on the worker count
CHUNK = 250


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


class ChainFailure(RuntimeError):
    """At least one chain raised during an ensemble run."""


@dataclasses.dataclass
class RunConfig:
    """One experiment row: a single (process, potential, gamma) ensemble."""

    name: str
    process: str
    potential: dict
    gamma: object = "auto"          # positive number or "auto"
    total_time: float = 30.0
    n_chains: int = 1000
    grid_dt: float = 0.05
    observable: str = "x1"
    fit_policy: str = "plain"       # "plain" | "envelope"
    fit_window: object = "auto"     # (t1, t2) or "auto"
    fit_target: object = "auto"     # number or "auto" (stationary mean)
    measurement: str = "decay"      # "decay" | "stationarity"
    n_batches: int = 30
    x0: object = None               # coords, scalar, "stationary", or None
    thin_horizon: float = 1.0
    master_seed: int = 0
    spectral_ntrunc: int = 0        # >0: also compute nu_spec (1D Gaussian)
    workers: int = 0                # 0: PDMP_WORKERS env or serial

    def validate(self):
        if self.process not in PROCESSES:
            raise ConfigError(f"process: unknown {self.process!r}")
        if not isinstance(self.potential, dict) or "kind" not in self.potential:
            raise ConfigError("potential: need a table with a 'kind' key")
        if self.gamma != "auto":
            g = _as_float(self.gamma, "gamma")
            if g <= 0:
                raise ConfigError("gamma: must be positive or 'auto'")
        if self.total_time <= 0:
            raise ConfigError("total_time: must be positive")
        if self.n_chains < 1:
            raise ConfigError("n_chains: must be at least 1")
        if self.grid_dt <= 0:
            raise ConfigError("grid_dt: must be positive")
        if self.fit_policy not in ("plain", "envelope"):
            raise ConfigError(f"fit_policy: unknown {self.fit_policy!r}")
        if self.measurement not in ("decay", "stationarity"):
            raise ConfigError(f"measurement: unknown {self.measurement!r}")
        if self.fit_window != "auto":
            w = tuple(self.fit_window)
            if len(w) != 2 or not 0 <= w[0] < w[1]:
                raise ConfigError("fit_window: need [t1, t2] with 0 <= t1 < t2")


def _as_float(v, field):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: not a number: {v!r}") from None


def build_potential(spec: dict):
    """Materialize a potential from its config table."""
    kind = spec.get("kind")
    if kind == "isotropic_gaussian":
        return isotropic_gaussian(_as_float(spec.get("m", 1.0), "potential.m"),
                                  int(spec.get("d", 1)))
    if kind == "diagonal_gaussian":
        diag = spec.get("diag")
        if not diag:
            raise ConfigError("potential.diag: required for diagonal_gaussian")
        return diagonal_gaussian(np.asarray(diag, dtype=float))
    if kind == "quadratic":
        mat = spec.get("matrix")
        if mat is None:
            raise ConfigError("potential.matrix: required for quadratic")
        return QuadraticPotential(np.asarray(mat, dtype=float))
    if kind == "product_double_well":
        d = int(spec.get("d", 1))
        return Product1DPotential([double_well_factor() for _ in range(d)],
                                  m_poincare=DOUBLE_WELL_POINCARE)
    raise ConfigError(f"potential.kind: unknown {kind!r}")


def resolve_gamma(config: RunConfig, potential) -> float:
    if config.gamma == "auto":
        return rates.optimal_gamma(config.process, potential.meta.m_poincare,
                                   potential.meta, potential.d)
    return float(config.gamma)


def _default_x0(potential) -> np.ndarray:
    # documented nonequilibrium start: 2/sqrt(m) in every coordinate
    off = 2.0 / math.sqrt(potential.meta.m_poincare)
    return np.full(potential.d, off)


def _resolve_x0(config: RunConfig, potential):
    if config.x0 == "stationary":
        if not isinstance(potential, QuadraticPotential):
            raise ConfigError(
                "x0: 'stationary' needs a quadratic potential (exact draw)")
        return "stationary"
    if config.x0 is None:
        return _default_x0(potential)
    x0 = np.atleast_1d(np.asarray(config.x0, dtype=float))
    if x0.size == 1 and potential.d > 1:
        x0 = np.full(potential.d, float(x0[0]))
    if x0.shape != (potential.d,):
        raise ConfigError(f"x0: expected {potential.d} coordinates")
    return x0


def _observable_names(config: RunConfig):
    """Observables evaluated on the grid, as (name, Observable) pairs."""
    if config.fit_policy == "envelope":
        base = dg.parse_observable(config.observable)
        if base.name[0] != "x" or "^" in base.name:
            raise ConfigError("fit_policy envelope needs a plain x observable")
        vname = "v" + base.name[1:]
        return [(base.name, base), (vname, dg.parse_observable(vname))]
    obs = dg.parse_observable(config.observable)
    return [(obs.name, obs)]


def _stationary_target(config: RunConfig, potential) -> float:
    if config.fit_target != "auto":
        return _as_float(config.fit_target, "fit_target")
    name = config.observable
    if "^" not in name:
        return 0.0  # first moments vanish in the invariant law
    if not isinstance(potential, QuadraticPotential):
        raise ConfigError(
            "fit_target: no automatic stationary mean for squared "
            "observables on this potential; set it explicitly")
    k = int(name[1:name.index("^")]) - 1
    inv_a = potential.eigvecs @ np.diag(1.0 / potential.eigvals) \
        @ potential.eigvecs.T
    return float(inv_a[k, k])


# ---------------------------------------------------------------------------
# worker protocol

def _chunk_payload(config: RunConfig, gamma, x0, grid):
    return {
        "process": config.process,
        "potential": config.potential,
        "gamma": gamma,
        "total_time": config.total_time,
        "thin_horizon": config.thin_horizon,
        "master_seed": config.master_seed,
        "grid": grid,
        "observables": [name for name, _ in _observable_names(config)]
        if config.measurement == "decay" else [],
        "measurement": config.measurement,
        "n_batches": config.n_batches,
        "x0": x0,
    }


def _run_chunk(payload, lo, hi):
    """Simulate chains [lo, hi) and reduce them to mergeable partial sums."""
    potential = build_potential(payload["potential"])
    grid = payload["grid"]
    obs = [dg.parse_observable(n) for n in payload["observables"]]
    sums = [np.zeros_like(grid) for _ in obs]
    sumsq = [np.zeros_like(grid) for _ in obs]
    counts = {}
    z_rows = []
    errors = []
    for i in range(lo, hi):
        try:
            rng = chain_rng(payload["master_seed"], i)
            init = payload["x0"]
            if isinstance(init, str):
                init = stationary_state(potential, rng)
            traj = simulate(payload["process"], potential, payload["gamma"],
                            payload["total_time"], init, rng,
                            thin_horizon=payload["thin_horizon"])
            for kind, n in traj.event_counts.items():
                counts[kind] = counts.get(kind, 0) + n
            if payload["measurement"] == "decay":
                for k, ob in enumerate(obs):
                    vals = dg.chain_values(traj, ob, grid)
                    sums[k] += vals
                    sumsq[k] += vals * vals
            else:
                zs = dg.moment_check(traj, potential,
                                     n_batches=payload["n_batches"])
                z_rows.append((i, zs))
        except Exception as exc:  # noqa: BLE001 - reported, run aborts later
            errors.append((i, f"{type(exc).__name__}: {exc}"))
    return {"lo": lo, "n": hi - lo, "sums": sums, "sumsq": sumsq,
            "counts": counts, "z_rows": z_rows, "errors": errors}


def _worker_count(config: RunConfig) -> int:
    if config.workers > 0:
        return config.workers
    env = os.environ.get("PDMP_WORKERS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PDMP_WORKERS: not an integer: {env!r}") \
                from None
    return 1


def _run_ensemble(config: RunConfig, gamma, x0, grid):
    payload = _chunk_payload(config, gamma, x0, grid)
    bounds = list(range(0, config.n_chains, CHUNK)) + [config.n_chains]
    jobs = list(zip(bounds[:-1], bounds[1:]))
    workers = _worker_count(config)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_chunk, payload, lo, hi)
                    for lo, hi in jobs]
            parts = [f.result() for f in futs]
    else:
        parts = [_run_chunk(payload, lo, hi) for lo, hi in jobs]
    parts.sort(key=lambda p: p["lo"])  # chunk order, not completion order
    n_obs = len(payload["observables"])
    sums = [np.zeros_like(grid) for _ in range(n_obs)]
    sumsq = [np.zeros_like(grid) for _ in range(n_obs)]
    counts = {}
    z_rows = []
    errors = []
    for p in parts:
        for k in range(n_obs):
            sums[k] += p["sums"][k]
            sumsq[k] += p["sumsq"][k]
        for kind, n in p["counts"].items():
            counts[kind] = counts.get(kind, 0) + n
        z_rows.extend(p["z_rows"])
        errors.extend(p["errors"])
    if errors:
        msgs = "; ".join(f"chain {i}: {m}" for i, m in errors[:5])
        raise ChainFailure(f"{len(errors)} chain(s) failed: {msgs}")
    return sums, sumsq, counts, z_rows


# ---------------------------------------------------------------------------
# report assembly

CSV_COLUMNS = ["name", "process", "d", "m", "L", "gamma", "nu_hat",
               "nu_stderr", "nu_theory", "nu_spec", "z_worst",
               "refresh_events", "bounce_events", "segment_events",
               "n_chains", "total_time"]

INSUFFICIENT = "InsufficientSignal"


@dataclasses.dataclass
class ExperimentReport:
    """Rows plus the curves behind them; serializable to csv/json."""

    title: str
    rows: list
    curves: dict            # row name -> list of (observable name, curve)
    timing: dict            # row name -> wallclock seconds
    config_echo: list

    def row(self, name: str) -> dict:
        for r in self.rows:
            if r["name"] == name:
                return r
        raise KeyError(name)

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            cells = []
            for col in CSV_COLUMNS:
                v = r.get(col, "")
                if isinstance(v, float):
                    cells.append("" if math.isinf(v) else format(v, ".17g"))
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text())
        curve_dir = out / "curves"
        curve_dir.mkdir(exist_ok=True)
        for name, pairs in self.curves.items():
            for obs_name, curve in pairs:
                lines = ["t,mean,stderr"]
                for t, m, s in zip(curve.grid, curve.mean, curve.stderr):
                    lines.append(f"{t:.17g},{m:.17g},{s:.17g}")
                fname = f"{name}__{obs_name.replace('^', 'pow')}.csv"
                (curve_dir / fname).write_text("\n".join(lines) + "\n")
        payload = {
            "title": self.title,
            "rows": self.rows,
            "timing_seconds": self.timing,
            "configs": self.config_echo,
        }
        (out / "report.json").write_text(json.dumps(payload, indent=2,
                                                    default=str) + "\n")
        return out / "report.csv"


def _theory_columns(config: RunConfig, potential, gamma):
    meta = potential.meta
    m = meta.m_poincare
    nu_theory = rates.rate_lower_bound(config.process, m, meta, potential.d,
                                       gamma)
    ell = meta.hess_upper
    return m, ell, nu_theory


def _spectral_column(config: RunConfig, potential, gamma):
    if config.spectral_ntrunc <= 0:
        return ""
    if not (isinstance(potential, QuadraticPotential) and potential.d == 1):
        raise ConfigError(
            "spectral_ntrunc: the truncated-generator oracle only covers "
            "1D quadratic targets")
    m = float(potential.a[0, 0])
    gen = spectral.assemble_generator_1d(config.process, m, gamma,
                                         n_trunc=config.spectral_ntrunc)
    dt = spectral.suggested_dt(gen)
    nu, _ = spectral.decay_rate_spectral(
        gen, spectral.x_mode(config.spectral_ntrunc), horizon=40.0, dt=dt)
    return nu


def run_experiment(config) -> ExperimentReport:
    """Run one configured ensemble and assemble its report.

    config may be a RunConfig, a plain dict of its fields (potential given
    as a sub-dict), or a path to a TOML file with [experiment], [potential],
    and optional [fit] tables.
    """
    config = _coerce_config(config)
    config.validate()
    potential = build_potential(config.potential)
    gamma = resolve_gamma(config, potential)
    x0 = _resolve_x0(config, potential)
    n_grid = int(round(config.total_time / config.grid_dt))
    grid = np.linspace(0.0, config.total_time, n_grid + 1)
    t0 = time.monotonic()
    sums, sumsq, counts, z_rows = _run_ensemble(config, gamma, x0, grid)
    wall = time.monotonic() - t0

    row = {
        "name": config.name,
        "process": config.process,
        "d": potential.d,
        "m": potential.meta.m_poincare,
        "L": potential.meta.hess_upper,
        "gamma": gamma,
        "n_chains": config.n_chains,
        "total_time": config.total_time,
        "refresh_events": counts.get("refresh", 0),
        "bounce_events": counts.get("bounce", 0),
        "segment_events": counts.get("segment", 0),
    }
    m, ell, nu_theory = _theory_columns(config, potential, gamma)
    row["nu_theory"] = nu_theory
    rows = []
    curves = {}
    timing = {}
    if config.measurement == "decay":
        pairs = _observable_names(config)
        built = [(name, dg.curve_from_sums(grid, sums[k], sumsq[k],
                                           config.n_chains))
                 for k, (name, _) in enumerate(pairs)]
        curves[config.name] = built
        target = _stationary_target(config, potential)
        if config.fit_policy == "envelope":
            fit_curve = dg.envelope_curve(
                built[0][1], built[1][1],
                scale_x=math.sqrt(potential.meta.m_poincare))
            target = 0.0
        else:
            fit_curve = built[0][1]
        try:
            window = tuple(config.fit_window) \
                if config.fit_window != "auto" \
                else dg.default_window(fit_curve, target, nu_theory)
            fit = dg.fit_decay_rate(fit_curve, target, window)
            row.update(nu_hat=fit.nu_hat, nu_stderr=fit.stderr)
            row["fit_window"] = list(fit.window)
            row["fit_points"] = fit.points_used
            row["fit_r_squared"] = fit.r_squared
        except dg.InsufficientSignalError:
            row.update(nu_hat=INSUFFICIENT, nu_stderr=INSUFFICIENT)
        row["nu_spec"] = _spectral_column(config, potential, gamma)
        row["z_worst"] = ""
        rows.append(row)
        timing[config.name] = wall
    else:
        for i, zs in z_rows:
            r = dict(row)
            r["name"] = f"{config.name}-seed{i}"
            r["n_chains"] = 1
            r.update(nu_hat="", nu_stderr="", nu_spec="")
            r["z_worst"] = max(abs(v) for v in zs.values())
            r["z_scores"] = {k: v for k, v in zs.items()}
            rows.append(r)
            timing[r["name"]] = wall / max(1, len(z_rows))
    echo = dataclasses.asdict(config)
    return ExperimentReport(title=config.name, rows=rows, curves=curves,
                            timing=timing, config_echo=[echo])


def _coerce_config(config) -> RunConfig:
    if isinstance(config, RunConfig):
        return copy.deepcopy(config)
    if isinstance(config, (str, Path)):
        with open(config, "rb") as fh:
            doc = tomllib.load(fh)
        flat = dict(doc.get("experiment", {}))
        flat["potential"] = doc.get("potential", {})
        fit = doc.get("fit", {})
        if "policy" in fit:
            flat["fit_policy"] = fit["policy"]
        if "window" in fit:
            flat["fit_window"] = fit["window"]
        if "target" in fit:
            flat["fit_target"] = fit["target"]
        config = flat
    if not isinstance(config, dict):
        raise ConfigError(f"unsupported config object: {type(config)!r}")
    config = dict(config)
    config.setdefault("name", "experiment")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return RunConfig(**config)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def merge_reports(title: str, reports) -> ExperimentReport:
    rows, curves, timing, echo = [], {}, {}, []
    for rep in reports:
        rows.extend(rep.rows)
        curves.update(rep.curves)
        timing.update(rep.timing)
        echo.extend(rep.config_echo)
    return ExperimentReport(title=title, rows=rows, curves=curves,
                            timing=timing, config_echo=echo)


# ---------------------------------------------------------------------------
# presets

def _stationarity_rows():
    pot = {"kind": "quadratic", "matrix": [[2.0, 0.5], [0.5, 1.0]]}
    return [RunConfig(name=f"stationarity-{p}", process=p, potential=pot,
                      gamma=1.0, total_time=5.0e4, n_chains=10,
                      measurement="stationarity", x0="stationary",
                      master_seed=1003)
            for p in PROCESSES]


def _rhmc_rate_vs_m_rows():
    # the arms are exact time rescalings of each other, so a common relative
    # fit window keeps any window bias identical across arms and out of the
    # fitted scaling exponent
    rows = []
    for k, m in enumerate((0.0625, 0.25, 1.0, 4.0)):
        s = math.sqrt(m)
        rows.append(RunConfig(
            name=f"rhmc-m{m:g}", process="rhmc",
            potential={"kind": "isotropic_gaussian", "m": m, "d": 1},
            gamma="auto", total_time=10.0 / s, n_chains=10000,
            grid_dt=0.05 / s, observable="x1", fit_policy="envelope",
            fit_window=(1.0 / s, 9.0 / s), master_seed=1006 + k))
    return rows


def _zz_rate_vs_l_rows():
    # the x1 marginal mixes faster than the lower bound, so the window is
    # anchored to the observed decay scale rather than 1/nu_theory
    rows = []
    for k, ell in enumerate((1.0, 4.0, 16.0, 64.0)):
        rows.append(RunConfig(
            name=f"zz-L{ell:g}", process="zz",
            potential={"kind": "diagonal_gaussian", "diag": [1.0, ell]},
            gamma="auto", total_time=40.0, n_chains=800,
            grid_dt=0.1, observable="x1", fit_policy="plain",
            fit_window=(2.0, 24.0), master_seed=1009 + k))
    return rows


def _bps_rate_vs_d_rows():
    rows = []
    for k, d in enumerate((1, 2, 4, 8, 16)):
        rows.append(RunConfig(
            name=f"bps-d{d}", process="bps",
            potential={"kind": "isotropic_gaussian", "m": 1.0, "d": d},
            gamma="auto", total_time=24.0, n_chains=2000, grid_dt=0.05,
            observable="x1", fit_policy="envelope", fit_window=(1.5, 16.0),
            master_seed=1031 + k))
    return rows


def _gamma_sweep_rows():
    rows = []
    # each process at its sweep target; arms at a tenth of, at, and at ten
    # times the optimal refreshment rate
    arms = {
        "rhmc": [  # target: 1D Gaussian m=1, gamma_opt=1
            dict(g=0.1, T=70.0, n=5000, window=(2.0, 28.0), pol="envelope"),
            dict(g=1.0, T=20.0, n=4000, window=(1.0, 8.0), pol="envelope"),
            dict(g=10.0, T=50.0, n=2000, window=(2.0, 25.0), pol="envelope"),
        ],
        "zz": [    # target: 1D Gaussian m=1, gamma_opt=2
            dict(g=0.2, T=60.0, n=8000, window=(6.0, 24.0), pol="envelope"),
            dict(g=2.0, T=40.0, n=4000, window=(2.0, 12.0), pol="envelope"),
            dict(g=20.0, T=80.0, n=2000, window=(4.0, 28.0), pol="plain"),
        ],
        "bps": [   # target: 4D isotropic Gaussian m=1, gamma_opt=2
            dict(g=0.2, T=80.0, n=2000, window=(8.0, 48.0), pol="plain"),
            dict(g=2.0, T=40.0, n=2000, window=(2.0, 16.0), pol="plain"),
            dict(g=20.0, T=80.0, n=2000, window=(6.0, 40.0), pol="plain"),
        ],
    }
    seed = 1012
    for proc in PROCESSES:
        d = 4 if proc == "bps" else 1
        obs = "x1^2" if proc == "bps" else "x1"
        pot = {"kind": "isotropic_gaussian", "m": 1.0, "d": d}
        for arm in arms[proc]:
            rows.append(RunConfig(
                name=f"gamma-{proc}-{arm['g']:g}", process=proc,
                potential=pot, gamma=arm["g"], total_time=arm["T"],
                n_chains=arm["n"], grid_dt=0.1, observable=obs,
                fit_policy=arm["pol"], fit_window=arm["window"],
                master_seed=seed))
            seed += 1
    return rows


def _zz_product_rows():
    rows = []
    for k, d in enumerate((1, 2, 4, 8)):
        rows.append(RunConfig(
            name=f"zz-product-d{d}", process="zz",
            potential={"kind": "product_double_well", "d": d},
            gamma=1.0, total_time=30.0, n_chains=8000, grid_dt=0.1,
            observable="x1", fit_policy="plain", fit_window=(1.5, 9.0),
            x0=1.5, master_seed=1045 + k))
    return rows


PRESETS = {
    "stationarity": _stationarity_rows,
    "rhmc-rate-vs-m": _rhmc_rate_vs_m_rows,
    "zz-rate-vs-L": _zz_rate_vs_l_rows,
    "bps-rate-vs-d": _bps_rate_vs_d_rows,
    "gamma-sweep": _gamma_sweep_rows,
    "zz-product": _zz_product_rows,
}


def preset_rows(preset: str):
    """The RunConfig list a preset would execute."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: "
                          + ", ".join(sorted(PRESETS)))
    return PRESETS[preset]()


def run_sweep(preset: str, overrides: dict = None) -> ExperimentReport:
    """Execute every row of a named preset, with optional field overrides.

    Overrides apply to all rows (e.g. {"n_chains": 100} for a quick pass).
    """
    rows = preset_rows(preset)
    if overrides:
        known = {f.name for f in dataclasses.fields(RunConfig)}
        bad = set(overrides) - known
        if bad:
            raise ConfigError(f"unknown override fields: {sorted(bad)}")
        for cfg in rows:
            for key, val in overrides.items():
                setattr(cfg, key, val)
    reports = [run_experiment(cfg) for cfg in rows]
    return merge_reports(preset, reports)
