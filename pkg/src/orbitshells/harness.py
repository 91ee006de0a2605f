"""Experiment drivers: condition tables and the noise-averaging study."""
from __future__ import annotations

import configparser
import csv
import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .invariants import BispectrumTable, InvariantBundle, compute_invariants
from .model import (
    ExpansionConfig,
    VolumeGrid,
    expand_volume,
    load_volume,
    random_coefficients,
    relative_error,
    render_volume,
    _expansion,
)
from .recovery import RecoveryOptions, march_system, recover

log = logging.getLogger(__name__)

THREADS_ENV = "ORBITSHELLS_THREADS"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def synthetic_volume(seed: int, ell_max: int = 10, num_shells: int = 8, n: int = 31) -> VolumeGrid:
    """Volume rendered from i.i.d. normal coefficients (a generic signal)."""
    return render_volume(random_coefficients(seed, ell_max, num_shells), n)


# ---------------------------------------------------------------------------
# condition tables


def condition_table(grid: VolumeGrid, ell_max: int = 10, shell_counts=(3, 4, 5), use_all: bool = True):
    """Per-frequency condition numbers of the marching systems for a volume.

    For each shell count the volume is expanded and the systems are built from
    its own coefficients (exactly what recovery from clean invariants solves).
    Returns rows ``{"l", "shells", "condition"}``.
    """
    rows = []
    for R in shell_counts:
        coeffs, _ = expand_volume(grid, ExpansionConfig(ell_max, R))
        for ell in range(2, ell_max + 1):
            mat = march_system(coeffs, ell, use_all)
            if mat.shape[0] < mat.shape[1]:
                cond = float("inf")
            else:
                s = np.linalg.svd(mat, compute_uv=False)
                cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
            rows.append({"l": ell, "shells": R, "condition": cond})
    return rows


def condition_rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["l", "shells", "condition"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({"l": r["l"], "shells": r["shells"], "condition": repr(float(r["condition"]))})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# noise experiment


@dataclass
class NoiseExperimentConfig:
    num_measurements: int = 500
    noise_variance: float = 0.5
    shell_counts: tuple = (3, 4, 5, 6, 7, 8)
    ell_max: int = 10
    seed: int = 0
    grid_size: int = 31
    volume_path: str | None = None
    volume_format: str = "raw_f64"
    synthetic_seed: int = 0
    synthetic_shells: int | None = None
    full_recovery: bool = False

    def __post_init__(self):
        self.shell_counts = tuple(int(r) for r in self.shell_counts)
        if self.num_measurements < 1:
            raise ValueError("num_measurements must be >= 1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if not self.shell_counts:
            raise ValueError("shell_counts must not be empty")

    @classmethod
    def from_file(cls, path) -> NoiseExperimentConfig:
        """Read an INI-style file: ``[experiment]`` and optional ``[volume]``."""
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        kw = {}
        if cp.has_section("experiment"):
            sec = cp["experiment"]
            for name, conv in (("num_measurements", int), ("noise_variance", float), ("ell_max", int),
                               ("seed", int), ("grid_size", int)):
                if name in sec:
                    kw[name] = conv(sec[name])
            if "shell_counts" in sec:
                kw["shell_counts"] = _parse_int_list(sec["shell_counts"])
            if "full_recovery" in sec:
                kw["full_recovery"] = sec.getboolean("full_recovery")
        if cp.has_section("volume"):
            sec = cp["volume"]
            if "path" in sec:
                kw["volume_path"] = sec["path"]
            if "format" in sec:
                kw["volume_format"] = sec["format"]
            if "synthetic_seed" in sec:
                kw["synthetic_seed"] = int(sec["synthetic_seed"])
            if "synthetic_shells" in sec:
                kw["synthetic_shells"] = int(sec["synthetic_shells"])
        unknown = set(cp.sections()) - {"experiment", "volume"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        return cls(**kw)


def _parse_int_list(text: str):
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.replace(",", " ").split())


@dataclass
class ErrorRow:
    shells: int
    relative_error: float
    wall_time_s: float
    condition_summary: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class ErrorTable:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shells", "relative_error", "wall_time_s"])
        for r in self.rows:
            w.writerow([r.shells, repr(float(r.relative_error)), f"{r.wall_time_s:.3f}"])
        return buf.getvalue()

    def errors(self):
        return [r.relative_error for r in self.rows]


class _BundleSum:
    def __init__(self, ell_max, R):
        self.ell_max, self.R, self.count = ell_max, R, 0
        self.means = np.zeros(R)
        self.gram = [np.zeros((R, R)) for _ in range(ell_max + 1)]
        self.blocks = None

    def add(self, b: InvariantBundle):
        self.count += 1
        self.means += b.means
        for g, h in zip(self.gram, b.gram):
            g += h
        if self.blocks is None:
            self.blocks = {t: b.bispectrum.block(*t).copy() for t in b.bispectrum.triples()}
        else:
            for t, blk in self.blocks.items():
                blk += b.bispectrum.block(*t)

    def mean(self) -> InvariantBundle:
        n = self.count
        return InvariantBundle(
            self.ell_max, self.R, self.means / n, [g / n for g in self.gram],
            BispectrumTable(self.ell_max, self.R, {t: v / n for t, v in self.blocks.items()}),
            provenance=f"average of {n} noisy bundles",
        )


def _truth_volume(config: NoiseExperimentConfig) -> VolumeGrid:
    if config.volume_path:
        return load_volume(config.volume_path, config.volume_format)
    shells = config.synthetic_shells or max(config.shell_counts)
    return synthetic_volume(config.synthetic_seed, config.ell_max, shells, config.grid_size)


def noisy_bundle(truth: VolumeGrid, config: NoiseExperimentConfig, num_shells: int) -> InvariantBundle:
    """Average of the invariants of ``truth + noise_i`` over all replicas.

    Replica ``i`` draws its noise from seed ``(config.seed, i)``, so results do
    not depend on the worker count and replicas are shared across shell counts.
    """
    exp = _expansion(truth.n, ExpansionConfig(config.ell_max, num_shells))
    sigma = float(np.sqrt(config.noise_variance))

    def one(i):
        rng = np.random.default_rng([config.seed, i])
        noisy = VolumeGrid(truth.data + sigma * rng.standard_normal(truth.data.shape))
        return compute_invariants(exp.fit(noisy))

    acc = _BundleSum(config.ell_max, num_shells)
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            for b in pool.map(one, range(config.num_measurements)):
                acc.add(b)
    else:
        for i in range(config.num_measurements):
            acc.add(one(i))
    return acc.mean()


def noise_experiment(config: NoiseExperimentConfig) -> ErrorTable:
    """Recovery error versus shell count from averaged noisy invariants.

    l = 0, 1 are taken from the noiseless expansion unless
    ``config.full_recovery`` is set; errors are relative Frobenius norms of
    the coefficient vectors (post-alignment in full-recovery mode).
    """
    truth_grid = _truth_volume(config)
    rows = []
    for R in config.shell_counts:
        t0 = time.perf_counter()
        truth, _ = expand_volume(truth_grid, ExpansionConfig(config.ell_max, R))
        try:
            bundle = noisy_bundle(truth_grid, config, R)
            if config.full_recovery:
                from .rotation import align

                est, report = recover(bundle)
                err = align(est, truth).relative_error
            else:
                est, report = recover(bundle, RecoveryOptions(known_low_frequencies=truth.truncated(1)))
                err = relative_error(est, truth)
            conds = report.conditions()
            summary = {"max": max(conds.values(), default=1.0), "min": min(conds.values(), default=1.0)}
            rows.append(ErrorRow(R, err, time.perf_counter() - t0, summary))
        except NumericalError as exc:
            rows.append(ErrorRow(R, float("nan"), time.perf_counter() - t0, error=str(exc)))
        log.info("R=%d error=%.3g (%.1fs)", R, rows[-1].relative_error, rows[-1].wall_time_s)
    return ErrorTable(rows)
