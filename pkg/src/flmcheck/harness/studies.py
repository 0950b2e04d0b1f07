"""Monte-Carlo study drivers: size/power tables and the grid-size sweep.

Every replicate gets its own dataset seed and ridge seed, both derived
from the study seed and the cell identity through a SeedSequence, so a
table is reproducible bit for bit (apart from timings) and cells can be
added to a config without disturbing the cells already there.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import make_uniform_grid
from ..hypotest import TestConfig, TestReport, hybrid_test
from ..procsim import calibrate_noise, generate_dataset, scenario
from .io import ingest_csv

__all__ = [
    "PowerRow",
    "StudyConfig",
    "GridsizeSeries",
    "run_power_study",
    "run_gridsize_study",
    "run_single_test",
    "summarize_report",
]

# sub-stream tags keeping calibration draws and replicate draws apart
_CALIBRATION_STREAM = 1
_CELL_STREAM = 2

# grid used to calibrate scenario noise once, independent of the cell's M
_CALIBRATION_M = 101

_MAX_WORKERS = max(1, min(8, os.cpu_count() or 1))

GRIDSIZE_SCENARIOS = ("S2", "S4", "S6", "S8", "S9")


@dataclass(frozen=True)
class PowerRow:
    """One table cell: empirical rejection rate and dimension split."""

    scenario: str
    d: int
    n: int
    M: int
    replicates: int
    reject_pct: float
    q0_pct: float
    sec_per_rep: float
    failures: int = 0

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not (0.0 <= self.reject_pct <= 100.0 and 0.0 <= self.q0_pct <= 100.0):
            raise ValueError("rates are percentages in [0, 100]")

    @property
    def flagged(self) -> bool:
        """True when more than 1% of the replicates failed numerically."""
        return self.failures * 100 > self.replicates


@dataclass(frozen=True)
class StudyConfig:
    """What to run and where to put it."""

    scenarios: tuple[str, ...] = tuple(f"S{k}" for k in range(1, 10))
    d_levels: tuple[int, ...] = (0, 1, 2)
    n_values: tuple[int, ...] = (100,)
    M_values: tuple[int, ...] = (30,)
    replicates: int = 1000
    seed: int = 0
    alpha: float = 0.05
    out_dir: str = "out"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "d_levels", tuple(int(d) for d in self.d_levels))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "M_values", tuple(int(M) for M in self.M_values))
        if not self.scenarios:
            raise ValueError("need at least one scenario")
        for sid in self.scenarios:
            scenario(sid)  # raises on unknown ids
        if not self.d_levels or any(d not in (0, 1, 2) for d in self.d_levels):
            raise ValueError("d levels must be a nonempty subset of {0, 1, 2}")
        if not self.n_values or min(self.n_values) < 10:
            raise ValueError("sample sizes must be at least 10")
        if not self.M_values or min(self.M_values) < 2:
            raise ValueError("grid sizes must be at least 2")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "d_levels": list(self.d_levels),
            "n_values": list(self.n_values),
            "M_values": list(self.M_values),
            "replicates": self.replicates,
            "seed": self.seed,
            "alpha": self.alpha,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("scenarios", "d_levels", "n_values", "M_values"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class GridsizeSeries:
    """Line-plot series extracted from the grid-size study rows.

    size_vs_M / power_vs_M map scenario id to [(M, rate)] at the first
    configured n; power_vs_n maps M in {16, 32} to scenario id to
    [(n, rate)] at deviation level 1.
    """

    size_vs_M: dict = field(default_factory=dict)
    power_vs_M: dict = field(default_factory=dict)
    power_vs_n: dict = field(default_factory=dict)


def _scenario_noise(cfg: StudyConfig) -> dict[str, float]:
    """Calibrate sigma2 once per scenario on a fixed reference grid.

    Using one grid for every cell keeps comparisons across M paired:
    the cells then differ only in where the same process is observed,
    not in how noisy it is.
    """
    grid = make_uniform_grid(_CALIBRATION_M)
    out = {}
    for sid in cfg.scenarios:
        ss = np.random.SeedSequence((int(cfg.seed), _CALIBRATION_STREAM, int(sid[1:])))
        out[sid] = calibrate_noise(scenario(sid), grid, np.random.default_rng(ss))
    return out


def _run_cell(
    sid: str, d: int, n: int, M: int, cfg: StudyConfig, sigma2: float
) -> PowerRow:
    spec = scenario(sid)
    ss = np.random.SeedSequence(
        (int(cfg.seed), _CELL_STREAM, int(sid[1:]), int(d), int(n), int(M))
    )
    seeds = ss.generate_state(2 * cfg.replicates, np.uint64)
    base = TestConfig(alpha=cfg.alpha)

    def one(k: int) -> tuple[bool, bool, bool]:
        try:
            ds = generate_dataset(spec, d, n, M, int(seeds[2 * k]), sigma2=sigma2)
            rep = hybrid_test(ds, replace(base, ridge_seed=int(seeds[2 * k + 1])))
        except (RuntimeError, ValueError, ArithmeticError):
            return False, False, False
        return True, rep.reject, rep.q_hat == 0

    start = time.perf_counter()
    if _MAX_WORKERS == 1:
        outcomes = [one(k) for k in range(cfg.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=_MAX_WORKERS) as pool:
            outcomes = list(pool.map(one, range(cfg.replicates)))
    elapsed = time.perf_counter() - start

    failures = sum(1 for ok, _, _ in outcomes if not ok)
    rejections = sum(1 for _, rej, _ in outcomes if rej)
    q0 = sum(1 for _, _, z in outcomes if z)
    return PowerRow(
        scenario=sid,
        d=d,
        n=n,
        M=M,
        replicates=cfg.replicates,
        reject_pct=rejections * 100.0 / cfg.replicates,
        q0_pct=q0 * 100.0 / cfg.replicates,
        sec_per_rep=elapsed / cfg.replicates,
        failures=failures,
    )


def run_power_study(cfg: StudyConfig) -> list[PowerRow]:
    """Empirical size/power table over scenarios x d x n x M.

    Each cell runs ``cfg.replicates`` independent hybrid tests on fresh
    datasets; numeric failures are counted per cell (rates stay
    rejections / replicates) and a cell with more than 1% failures is
    flagged.  Deterministic given cfg.seed, up to the timing column.
    """
    noise = _scenario_noise(cfg)
    rows = []
    for sid in cfg.scenarios:
        for d in cfg.d_levels:
            for n in cfg.n_values:
                for M in cfg.M_values:
                    rows.append(_run_cell(sid, d, n, M, cfg, noise[sid]))
    return rows


def run_gridsize_study(cfg: StudyConfig) -> tuple[list[PowerRow], GridsizeSeries]:
    """Size and power as the observation grid coarsens.

    Runs d = 0 (size) and d = 1 (power) over cfg.M_values at the first
    configured n, plus a power-versus-n sweep at M = 16 and M = 32 when
    those grid sizes are configured.  Returns the rows together with
    the plot series bundle.
    """
    bad = [sid for sid in cfg.scenarios if sid not in GRIDSIZE_SCENARIOS]
    if bad:
        raise ValueError(
            f"grid-size study covers scenarios {GRIDSIZE_SCENARIOS}, not {bad}"
        )
    noise = _scenario_noise(cfg)
    n0 = cfg.n_values[0]

    cells: list[tuple[str, int, int, int]] = []

    def want(cell: tuple[str, int, int, int]) -> None:
        if cell not in cells:
            cells.append(cell)

    for sid in cfg.scenarios:
        for M in cfg.M_values:
            want((sid, 0, n0, M))
            want((sid, 1, n0, M))
    sweep_Ms = [M for M in (16, 32) if M in cfg.M_values]
    for sid in cfg.scenarios:
        for M in sweep_Ms:
            for n in cfg.n_values:
                want((sid, 1, n, M))

    by_cell = {
        cell: _run_cell(cell[0], cell[1], cell[2], cell[3], cfg, noise[cell[0]])
        for cell in cells
    }

    series = GridsizeSeries()
    for sid in cfg.scenarios:
        series.size_vs_M[sid] = [
            (M, by_cell[(sid, 0, n0, M)].reject_pct) for M in cfg.M_values
        ]
        series.power_vs_M[sid] = [
            (M, by_cell[(sid, 1, n0, M)].reject_pct) for M in cfg.M_values
        ]
    for M in sweep_Ms:
        series.power_vs_n[M] = {
            sid: [(n, by_cell[(sid, 1, n, M)].reject_pct) for n in sorted(cfg.n_values)]
            for sid in cfg.scenarios
        }
    return list(by_cell.values()), series


def summarize_report(report: TestReport, alpha: float, n: int | None = None, M: int | None = None) -> str:
    """Human-readable block for one test run."""
    routed = (
        "weighted residual mean (q_hat = 0)"
        if report.q_hat == 0
        else f"paired kernel statistic (q_hat = {report.q_hat})"
    )
    decision = (
        "reject the functional linear model"
        if report.reject
        else "no evidence against the functional linear model"
    )
    lines = ["adaptive hybrid lack-of-fit test"]
    if n is not None and M is not None:
        lines.append(f"  data      n = {n} curves on M = {M} grid points")
    lines += [
        f"  T_n       {report.T_n:.6g}",
        f"  q_hat     {report.q_hat}  -> {routed}",
        f"  V0        {report.V0:.6g}",
        f"  V1        {report.V1:.6g}",
        f"  p-value   {report.p_value:.4g}",
        f"  decision  {decision} (alpha = {alpha:g})",
    ]
    return "\n".join(lines)


def run_single_test(
    curves_path: str, response_path: str, config: TestConfig = TestConfig()
) -> tuple[TestReport, str]:
    """Ingest a curves/response file pair and run the hybrid test once."""
    dataset = ingest_csv(curves_path, response_path)
    report = hybrid_test(dataset, config)
    summary = summarize_report(report, config.alpha, n=dataset.n, M=dataset.grid.M)
    return report, summary
