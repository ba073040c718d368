"""Experiment driver: configure a problem, march in time, record and analyse corrections.

Every run writes four files into its output directory::

    corrections.csv   problem, scheme, checkpoint, s, x_s
    orders.csv        label, s, p_Q, p_R, Q_p, verdict
    solution.csv      final field(s) on the nodes
    run.meta          config echo, library versions, timings

The coupled problem additionally writes ``table1.csv``. Floats are written
with 17 significant digits and every file is replaced atomically.
"""

import configparser
import csv
import dataclasses
import io
import math
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels, coupled, fdm1d, fem2d
from .constitutive import SoilModel
from .exceptions import ConfigError, MismatchedProblem, NoConvergence
from .iteration import NORMS, SchemeConfig
from .orders import CorrectionSequence, Kind, classify

PROBLEMS = ("benchmark2d", "fdm1d_generic", "coupled_manufactured")
SCHEMES = ("newton", "lscheme")

DEFAULT_L = {"benchmark2d": 0.15, "fdm1d_generic": 0.5, "coupled_manufactured": 100.0}
DEFAULT_EPSILON = {"benchmark2d": 1e-7, "fdm1d_generic": 1e-7, "coupled_manufactured": 1e-6}
DEFAULT_T = {"benchmark2d": 0.003, "fdm1d_generic": 0.003, "coupled_manufactured": 1.0}

CHECKPOINT_NAMES = ("T/3", "2T/3", "T")


def default_soil():
    text = resources.files("richards_lab").joinpath("data/benchmark_soil.cfg").read_text()
    return SoilModel.from_mapping(_parse_flat(text))


def _parse_flat(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[run]\n" + text)
    return dict(parser["run"])


@dataclass
class ExperimentConfig:
    problem: str = "benchmark2d"
    scheme: str = "lscheme"
    L: float = None
    epsilon: float = None
    max_iters: int = 10_000
    aa_enabled: bool = False
    aa_depth: int = 5
    aa_beta: float = 1.0
    nx: int = 40
    ny: int = 40
    nz: int = 40
    K: int = 9
    T: float = None
    norm: str = "l2_scaled"
    linear_solver: str = "direct"
    diffusion: float = 1.0
    alpha: float = None
    n: float = None
    theta_r: float = None
    theta_s: float = None
    K_s: float = None
    out: str = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "newton" and self.problem != "benchmark2d":
            raise ConfigError("Newton is only implemented for benchmark2d")
        if self.L is None:
            self.L = DEFAULT_L[self.problem]
        if self.epsilon is None:
            self.epsilon = DEFAULT_EPSILON[self.problem]
        if self.T is None:
            self.T = DEFAULT_T[self.problem]
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.scheme == "lscheme" and not self.L > 0:
            raise ConfigError("L must be positive for the L-scheme")
        if not self.T > 0 or self.max_iters < 1:
            raise ConfigError("T and max_iters must be positive")
        if self.K < 3 or self.K % 3:
            raise ConfigError(f"K must be a positive multiple of 3, got {self.K}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {tuple(NORMS)}")
        if self.aa_enabled and self.problem == "coupled_manufactured":
            raise ConfigError("Anderson acceleration is not wired into the coupled problem")

    @classmethod
    def from_mapping(cls, mapping):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides=None):
        """Read a flat ``key = value`` file; entries of ``overrides`` win."""
        mapping = _parse_flat(Path(path).read_text())
        mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(mapping)

    def soil(self):
        base = default_soil()
        params = {name: getattr(self, name) if getattr(self, name) is not None else getattr(base, name)
                  for name in ("alpha", "n", "theta_r", "theta_s", "K_s")}
        return SoilModel(**params)

    def scheme_config(self):
        return SchemeConfig(self.scheme, L=self.L, epsilon=self.epsilon, max_iters=self.max_iters,
                            aa_enabled=self.aa_enabled, aa_depth=self.aa_depth,
                            aa_beta=self.aa_beta, norm=self.norm,
                            linear_solver=self.linear_solver)

    def as_dict(self):
        return dataclasses.asdict(self)


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ is bool or typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


@dataclass
class RunRecord:
    config: ExperimentConfig
    sequences: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    iterations: list = field(default_factory=list)
    checkpoint_steps: tuple = ()
    solution: dict = field(default_factory=dict)
    table1: list = field(default_factory=list)
    out_dir: Path = None

    @property
    def total_iterations(self):
        return int(sum(self.iterations))

    @property
    def label(self):
        aa = f"+AA({self.config.aa_depth})" if self.config.aa_enabled else ""
        return f"{self.config.problem}/{self.config.scheme}{aa}"


def checkpoint_steps(nsteps):
    return tuple(max(1, round(nsteps * j / 3)) for j in (1, 2, 3))


def _seq_with(values, label, checkpoint, kind=Kind.corrections):
    seq = values if isinstance(values, CorrectionSequence) else \
        CorrectionSequence.from_values(values, label, kind)
    seq.label = label
    seq.meta = dict(seq.meta, checkpoint=checkpoint)
    return seq


def _march(cfg, record, step_fn, psi0):
    steps = checkpoint_steps(cfg.K)
    record.checkpoint_steps = steps
    psi = psi0
    for k in range(1, cfg.K + 1):
        label = f"{record.label}@{CHECKPOINT_NAMES[steps.index(k)]}" if k in steps else ""
        try:
            psi, seq = step_fn(psi, label)
        except NoConvergence as exc:
            if exc.sequence is not None:
                record.sequences.append(_seq_with(exc.sequence, label or f"k={k}", f"k={k}"))
            exc.record = record
            raise
        record.iterations.append(seq.meta["iterations"])
        if k in steps:
            record.sequences.append(_seq_with(seq, label, CHECKPOINT_NAMES[steps.index(k)]))
    return psi


def _run_benchmark2d(cfg, record):
    mesh = fem2d.TriMesh(cfg.nx, cfg.ny)
    soil = cfg.soil()
    dt = cfg.T / cfg.K
    f = fem2d.benchmark_source(mesh.x, mesh.z)
    scheme = cfg.scheme_config()

    def step(psi, label):
        return fem2d.solve_time_step(mesh, soil, psi, dt, f, scheme, label=label)

    psi = _march(cfg, record, step, fem2d.benchmark_initial(mesh.x, mesh.z))
    record.solution = {"x": mesh.x, "z": mesh.z, "psi": psi}


def _run_fdm1d(cfg, record):
    grid = fdm1d.Grid1D(1.0, cfg.nz)
    soil = cfg.soil()
    lcfg = fdm1d.ExplicitLConfig(L=cfg.L, dt=cfg.T / cfg.K, epsilon=cfg.epsilon,
                                 max_iters=cfg.max_iters, aa_enabled=cfg.aa_enabled,
                                 aa_depth=cfg.aa_depth, aa_beta=cfg.aa_beta, norm=cfg.norm)
    f = fdm1d.column_source(grid)

    def step(psi, label):
        return fdm1d.solve_time_step_1d(grid, soil, psi, lcfg, f, label=label)

    psi = _march(cfg, record, step, fdm1d.column_initial(grid))
    record.solution = {"z": grid.z, "psi": psi}


def _coupled_config(cfg, tol=None):
    return coupled.CoupledConfig(L=cfg.L, diffusion=cfg.diffusion, T=cfg.T,
                                 tol=cfg.epsilon if tol is None else tol,
                                 max_iters=max(cfg.max_iters, 200_000))


def _run_coupled(cfg, record):
    ccfg = _coupled_config(cfg)
    grid = fdm1d.Grid1D(1.0, cfg.nz)
    _, nsteps = coupled.time_grid(grid, ccfg)
    steps = checkpoint_steps(nsteps)
    record.checkpoint_steps = steps
    run = coupled.solve_coupled(grid, ccfg, record_steps=steps)
    record.iterations = [s.iterations for s in run.steps]
    for st in run.steps:
        if st.k not in steps:
            continue
        name = CHECKPOINT_NAMES[steps.index(st.k)]
        for var in ("psi", "c"):
            seq = getattr(st, f"{var}_corrections")
            record.sequences.append(_seq_with(seq, f"{record.label}@{name}/{var}", f"{name}/{var}"))
    record.solution = {"z": grid.z, "psi": run.state.psi, "c": run.state.c}
    t0 = time.perf_counter()
    record.table1 = coupled.refinement_study(cfg=ccfg)
    record.timings["table1"] = time.perf_counter() - t0


RUNNERS = {
    "benchmark2d": _run_benchmark2d,
    "fdm1d_generic": _run_fdm1d,
    "coupled_manufactured": _run_coupled,
}


def analyse(sequences):
    """OrderReport for every sequence long enough to classify (None otherwise)."""
    reports = []
    for seq in sequences:
        try:
            reports.append(classify(seq))
        except (ValueError, ArithmeticError):
            reports.append(None)
    return reports


def run(config, write=True):
    """Execute one experiment. NoConvergence propagates with ``.record`` attached."""
    if not isinstance(config, ExperimentConfig):
        raise ConfigError("run() expects an ExperimentConfig")
    record = RunRecord(config)
    t0 = time.perf_counter()
    RUNNERS[config.problem](config, record)
    record.timings["solve"] = time.perf_counter() - t0 - record.timings.get("table1", 0.0)
    t1 = time.perf_counter()
    record.reports = analyse(record.sequences)
    record.timings["analyse"] = time.perf_counter() - t1
    if write and config.out:
        t2 = time.perf_counter()
        write_outputs(record, config.out)
        record.timings["write"] = time.perf_counter() - t2
        _write_atomic(Path(config.out) / "run.meta", _meta_text(record))
    return record


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def fmt(value):
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.17g}"


def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def corrections_csv(record):
    cfg = record.config
    rows = []
    for seq in record.sequences:
        for s, x in enumerate(seq.values, start=1):
            rows.append([cfg.problem, cfg.scheme, seq.meta.get("checkpoint", ""), s, fmt(x)])
    return _csv_text(["problem", "scheme", "checkpoint", "s", "x_s"], rows)


def orders_rows(seq, report):
    rows = []
    n = len(seq.values)
    for s in range(1, n + 1):
        if report is None:
            rows.append([seq.label, s, "", "", "", "too_short"])
            continue
        p_q = report.p_Q[s - 1] if s < n else None
        q_p = report.Q_p[s - 1] if s < n else None
        rows.append([seq.label, s, fmt(p_q), fmt(report.p_R[s - 1]), fmt(q_p),
                     report.verdict.value])
    return rows


def orders_csv(sequences, reports):
    rows = []
    for seq, rep in zip(sequences, reports):
        rows.extend(orders_rows(seq, rep))
    return _csv_text(["label", "s", "p_Q", "p_R", "Q_p", "verdict"], rows)


def solution_csv(solution):
    keys = list(solution)
    cols = [np.asarray(solution[k]) for k in keys]
    rows = [[fmt(v) for v in vals] for vals in zip(*cols)]
    return _csv_text(keys, rows)


def table1_csv(rows):
    return _csv_text(["dz", "err_psi", "eoc_psi", "err_c", "eoc_c"],
                     [[fmt(r.dz), fmt(r.err_psi), fmt(r.eoc_psi), fmt(r.err_c), fmt(r.eoc_c)]
                      for r in rows])


def _versions():
    import scipy

    out = {"python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__, "backend": _kernels.BACKEND}
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = "absent"
    return out


def _meta_text(record):
    from . import __version__

    lines = [f"richards_lab = {__version__}"]
    lines += [f"{k} = {v}" for k, v in _versions().items()]
    lines += [f"config.{k} = {v}" for k, v in record.config.as_dict().items()]
    lines.append(f"norm = {record.config.norm}")
    lines.append(f"checkpoint_steps = {' '.join(map(str, record.checkpoint_steps))}")
    lines.append(f"total_iterations = {record.total_iterations}")
    lines.append(f"iterations = {' '.join(map(str, record.iterations))}")
    lines += [f"wall.{k} = {v:.6f}" for k, v in record.timings.items()]
    return "\n".join(lines) + "\n"


def write_outputs(record, out_dir):
    out = Path(out_dir)
    record.out_dir = out
    _write_atomic(out / "corrections.csv", corrections_csv(record))
    _write_atomic(out / "orders.csv", orders_csv(record.sequences, record.reports))
    _write_atomic(out / "solution.csv", solution_csv(record.solution))
    if record.table1:
        _write_atomic(out / "table1.csv", table1_csv(record.table1))
    _write_atomic(out / "run.meta", _meta_text(record))


def read_corrections(path):
    """Sequences from a corrections.csv, keyed by (problem, scheme, checkpoint)."""
    groups = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["problem"], row["scheme"], row["checkpoint"])
            groups.setdefault(key, []).append((int(row["s"]), float(row["x_s"])))
    seqs = []
    for (problem, scheme, checkpoint), pairs in groups.items():
        pairs.sort()
        seq = CorrectionSequence.from_values([x for _, x in pairs],
                                             f"{problem}/{scheme}@{checkpoint}")
        seq.meta["checkpoint"] = checkpoint
        seqs.append(seq)
    return seqs


def reanalyse(corrections_path, out_path=None):
    """Recompute orders.csv from an existing corrections.csv."""
    seqs = read_corrections(corrections_path)
    reports = analyse(seqs)
    if out_path is not None:
        _write_atomic(out_path, orders_csv(seqs, reports))
    return seqs, reports


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    label: str
    problem: str
    iterations: int
    iteration_ratio: float
    tail_q1: float
    tail_q1_ratio: float
    p_final: float
    wall: float


def tail_rate(seq, report):
    """Geometric-mean Q_1 over the classification tail window."""
    v = seq.values
    w = min(report.tail if report is not None else 3, v.size - 1)
    if w < 1:
        return float("nan")
    return float((v[-1] / v[-1 - w]) ** (1.0 / w))


def _summary(record):
    rates = [tail_rate(s, r) for s, r in zip(record.sequences, record.reports)]
    p = [r.p_final for r in record.reports if r is not None]
    return (float(np.mean(rates)) if rates else float("nan"),
            float(np.median(p)) if p else float("nan"))


def compare(records, cross_problem=False):
    """Side-by-side table; ratios are relative to the first record.

    Records must share a problem unless ``cross_problem`` is set (used for the
    column problem against the 2D benchmark).
    """
    if len(records) < 2:
        raise MismatchedProblem("compare needs at least two records")
    problems = {r.config.problem for r in records}
    if len(problems) > 1 and not cross_problem:
        raise MismatchedProblem(f"records span several problems: {sorted(problems)}")
    base_iters = records[0].total_iterations
    base_q, _ = _summary(records[0])
    rows = []
    for rec in records:
        q, p = _summary(rec)
        rows.append(ComparisonRow(rec.label, rec.config.problem, rec.total_iterations,
                                  rec.total_iterations / base_iters if base_iters else float("nan"),
                                  q, q / base_q if base_q else float("nan"), p,
                                  rec.timings.get("solve", float("nan"))))
    return rows


def comparison_csv(rows):
    return _csv_text(["label", "problem", "iterations", "iteration_ratio", "tail_q1",
                      "tail_q1_ratio", "p_final", "wall"],
                     [[r.label, r.problem, r.iterations, fmt(r.iteration_ratio), fmt(r.tail_q1),
                       fmt(r.tail_q1_ratio), fmt(r.p_final), fmt(r.wall)] for r in rows])
