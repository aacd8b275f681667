"""Panel phase-profile construction and quantile-targeted codeword search.

Codewords are linear horizontal phase ramps over a panel; a codebook is the
DFT family of such ramps, with slope index 0 the specular (mirror) profile.
Searches evaluate the full pipeline per codeword combination and minimize an
alpha-quantile objective.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import EmsConfiguration
from .metrics import METRIC_NAMES, MetricReport, metric_objective, quantile
from .pipeline import LinkBundle, PipelineParams, build_link_bundle, run_pipeline
from .scene import AngularPair, EmsPanel, Scene, wave_vector

TWO_PI = 2.0 * np.pi

DEFAULT_SEARCH_BUDGET = 4096


class BudgetExceededError(RuntimeError):
    pass


def wrap_phase(phi):
    """Map phases to [0, 2*pi)."""
    return np.mod(phi, TWO_PI)


def snell_phase_profile(
    panel: EmsPanel,
    incident: AngularPair,
    outgoing: AngularPair,
    phi0: float,
    wavelength: float,
) -> np.ndarray:
    """Element phases redirecting an incident plane wave toward a target.

    ``incident`` and ``outgoing`` are propagation directions in the panel's
    local frame. With exp(-j*2*pi*d/lambda) propagation phases and
    exp(+j*phi) element loading, the tangential profile that performs the
    redirection is (k_i - k_o)^T r_l + phi0; the profile is wrapped to
    [0, 2*pi).
    """
    k_i = wave_vector(incident, wavelength)
    k_o = wave_vector(outgoing, wavelength)
    # Local in-plane coordinates: (y, z) components of the local frame.
    tangential = (k_i - k_o)[1] * panel.local_x + (k_i - k_o)[2] * panel.local_y
    return wrap_phase(wrap_phase(phi0) + tangential)


@dataclass(frozen=True, eq=False)
class Codeword:
    """Linear horizontal phase ramp, quantized per element column."""

    slope: int  # DFT slope index a
    delta_phi: float  # per-column phase increment, radians
    phi0: float
    column_phases: np.ndarray  # (L_x,), wrapped

    def phases_for(self, panel: EmsPanel) -> np.ndarray:
        """Realized phase vector over a panel's element ordering."""
        if panel.cols != self.column_phases.size:
            raise ValueError(
                f"codeword built for {self.column_phases.size} columns, panel has {panel.cols}"
            )
        return np.repeat(self.column_phases, panel.rows)


@dataclass(frozen=True, eq=False)
class Codebook:
    codewords: tuple
    n_columns: int

    def __post_init__(self):
        slopes = [c.slope for c in self.codewords]
        if len(set(slopes)) != len(slopes):
            raise ValueError("codeword slopes must be distinct")

    @property
    def size(self) -> int:
        return len(self.codewords)

    def by_slope(self, slope: int) -> Codeword:
        for c in self.codewords:
            if c.slope == slope:
                return c
        raise KeyError(f"no codeword with slope {slope}")


def ramp_codeword(l_x: int, slope: int, phi0: float = 0.0) -> Codeword:
    """Single DFT-law ramp: per-column increment 2*pi*slope/L_x, centered."""
    columns = np.arange(l_x) - (l_x - 1) / 2.0
    delta = TWO_PI * slope / l_x
    phases = wrap_phase(wrap_phase(phi0) + delta * columns)
    return Codeword(slope=int(slope), delta_phi=delta, phi0=phi0, column_phases=phases)


def dft_gradient_codebook(l_x: int, size: int, phi0: float = 0.0) -> Codebook:
    """DFT family of horizontal ramps: slope a gives increment 2*pi*a/L_x per
    column, a in {-(K-1)/2 .. +(K-1)/2}; a = 0 is the specular codeword."""
    if size % 2 == 0:
        raise ValueError(f"codebook size must be odd, got {size}")
    if not 1 <= size <= l_x:
        raise ValueError(f"codebook size must lie in [1, {l_x}], got {size}")
    half = (size - 1) // 2
    words = tuple(ramp_codeword(l_x, a, phi0) for a in range(-half, half + 1))
    return Codebook(codewords=words, n_columns=l_x)


def configuration_from_slopes(scene: Scene, codebooks, slopes) -> EmsConfiguration:
    """Build a configuration from per-panel slope indices; ``None`` deactivates."""
    if len(slopes) != scene.n_panels or len(codebooks) != scene.n_panels:
        raise ValueError("need one codebook and one slope entry per panel")
    phases = []
    for panel, book, slope in zip(scene.panels, codebooks, slopes):
        if slope is None:
            phases.append(None)
        else:
            phases.append(book.by_slope(int(slope)).phases_for(panel))
    return EmsConfiguration(phases=tuple(phases))


@dataclass(eq=False)
class SearchEntry:
    slopes: tuple  # per-panel slope index or None
    objective: float  # averaged over seeds
    quantiles: dict  # metric -> {alpha: value}, averaged over seeds


@dataclass(eq=False)
class SearchReport:
    entries: list  # SearchEntry, in deterministic evaluation order
    best_index: int
    objective_metric: str
    objective_alpha: float
    seeds: tuple
    evaluation_count: int
    envelope: dict  # metric -> {alpha: (min, max)} across entries

    @property
    def best(self) -> SearchEntry:
        return self.entries[self.best_index]


def evaluate_configuration(
    scene: Scene,
    config: EmsConfiguration,
    params: PipelineParams,
    objective,
    seed: int,
    bundle: LinkBundle = None,
):
    """One deterministic pipeline run; returns (objective value, MetricReport)."""
    metric, alpha = objective
    result = run_pipeline(scene, config, params, seed, bundle=bundle)
    return metric_objective(result.report, metric, alpha), result.report


def _mean_tables(tables):
    out = {}
    for m in METRIC_NAMES:
        out[m] = {
            a: float(np.mean([t[m][a] for t in tables])) for a in tables[0][m]
        }
    return out


_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _evaluate_combo_ctx(slopes):
    scene, bundle, codebooks, params, objective, seeds = _WORKER_CTX
    config = configuration_from_slopes(scene, codebooks, slopes)
    values, tables = [], []
    for seed in seeds:
        value, report = evaluate_configuration(scene, config, params, objective, seed, bundle=bundle)
        values.append(value)
        tables.append(report.quantiles)
    return SearchEntry(slopes=tuple(slopes), objective=float(np.mean(values)), quantiles=_mean_tables(tables))


def _run_entries(scene, bundle, codebooks, combos, params, objective, seeds, jobs):
    ctx = (scene, bundle, codebooks, params, objective, tuple(seeds))
    if jobs and jobs > 1 and len(combos) > 1:
        # Results are collected in submission order, so the report does not
        # depend on worker scheduling.
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
            entries = list(pool.map(_evaluate_combo_ctx, combos, chunksize=1))
    else:
        _init_worker(ctx)
        entries = [_evaluate_combo_ctx(c) for c in combos]
    return entries


def _finish_report(entries, objective, seeds):
    objectives = [e.objective for e in entries]
    best = int(np.argmin(objectives))
    envelope = {
        m: {
            a: (
                min(e.quantiles[m][a] for e in entries),
                max(e.quantiles[m][a] for e in entries),
            )
            for a in entries[0].quantiles[m]
        }
        for m in METRIC_NAMES
    }
    metric, alpha = objective
    return SearchReport(
        entries=entries,
        best_index=best,
        objective_metric=metric,
        objective_alpha=alpha,
        seeds=tuple(seeds),
        evaluation_count=len(entries) * len(seeds),
        envelope=envelope,
    )


def _check_budget(n_combos, budget):
    if n_combos > budget:
        raise BudgetExceededError(
            f"search needs {n_combos} combinations but the budget allows {budget}; "
            "raise the budget or shrink the codebooks"
        )


def exhaustive_search(
    scene: Scene,
    codebooks,
    objective,
    seeds,
    params: PipelineParams,
    budget: int = DEFAULT_SEARCH_BUDGET,
    jobs: int = 1,
    bundle: LinkBundle = None,
) -> SearchReport:
    """Evaluate the full Cartesian product of the per-panel codebooks in
    lexicographic slope order."""
    if len(codebooks) != scene.n_panels:
        raise ValueError("need one codebook per panel")
    slope_lists = [[c.slope for c in book.codewords] for book in codebooks]
    combos = list(itertools.product(*slope_lists))
    _check_budget(len(combos), budget)
    if bundle is None:
        bundle = build_link_bundle(scene)
    entries = _run_entries(scene, bundle, codebooks, combos, params, objective, seeds, jobs)
    return _finish_report(entries, objective, seeds)


def greedy_search(
    scene: Scene,
    codebooks,
    objective,
    seeds,
    params: PipelineParams,
    budget: int = DEFAULT_SEARCH_BUDGET,
    jobs: int = 1,
    bundle: LinkBundle = None,
) -> SearchReport:
    """Optimize panels one at a time in declaration order, holding not-yet
    optimized panels at the specular codeword."""
    if len(codebooks) != scene.n_panels:
        raise ValueError("need one codebook per panel")
    _check_budget(sum(book.size for book in codebooks), budget)
    if bundle is None:
        bundle = build_link_bundle(scene)
    fixed = [0] * scene.n_panels
    entries = []
    for j, book in enumerate(codebooks):
        combos = []
        for word in book.codewords:
            combo = list(fixed)
            combo[j] = word.slope
            combos.append(tuple(combo))
        stage = _run_entries(scene, bundle, codebooks, combos, params, objective, seeds, jobs)
        entries.extend(stage)
        fixed[j] = stage[int(np.argmin([e.objective for e in stage]))].slopes[j]
    return _finish_report(entries, objective, seeds)


def single_panel_sweep(
    scene: Scene,
    panel_index: int,
    codebook: Codebook,
    objective,
    seeds,
    params: PipelineParams,
    budget: int = DEFAULT_SEARCH_BUDGET,
    jobs: int = 1,
    bundle: LinkBundle = None,
) -> SearchReport:
    """Sweep one panel's codebook with every other panel removed entirely."""
    if not 0 <= panel_index < scene.n_panels:
        raise ValueError(f"panel index {panel_index} out of range")
    _check_budget(codebook.size, budget)
    if bundle is None:
        bundle = build_link_bundle(scene)
    codebooks = [codebook] * scene.n_panels
    combos = []
    for word in codebook.codewords:
        combo = [None] * scene.n_panels
        combo[panel_index] = word.slope
        combos.append(tuple(combo))
    entries = _run_entries(scene, bundle, codebooks, combos, params, objective, seeds, jobs)
    return _finish_report(entries, objective, seeds)


def write_search_csv(path, report: SearchReport, n_panels: int):
    metric = report.objective_metric
    key = {"le": "le", "tw": "neg_tw", "ct": "neg_ct"}.get(metric, metric)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["combo_index"] + [f"slope_a_panel{j + 1}" for j in range(n_panels)]
        header += ["objective", "q50", "q90", "q95"]
        writer.writerow(header)
        for i, entry in enumerate(report.entries):
            row = [i] + ["off" if s is None else int(s) for s in entry.slopes]
            row.append(f"{entry.objective:.17g}")
            for a in (0.5, 0.9, 0.95):
                value = entry.quantiles[key].get(a)
                row.append("" if value is None else f"{value:.17g}")
            writer.writerow(row)


def write_search_json(path, report: SearchReport, scene: Scene, codebooks):
    best = report.best
    phase_vectors = []
    for panel, book, slope in zip(scene.panels, codebooks, best.slopes):
        if slope is None:
            phase_vectors.append(None)
        else:
            phase_vectors.append(book.by_slope(int(slope)).phases_for(panel).tolist())
    payload = {
        "objective_metric": report.objective_metric,
        "objective_alpha": report.objective_alpha,
        "seeds": list(report.seeds),
        "evaluation_count": report.evaluation_count,
        "best": {
            "combo_index": report.best_index,
            "slopes": [None if s is None else int(s) for s in best.slopes],
            "objective": best.objective,
            "quantiles": {m: {f"{a:g}": v for a, v in best.quantiles[m].items()} for m in METRIC_NAMES},
            "phase_vectors": phase_vectors,
        },
        "envelope": {
            m: {f"{a:g}": list(v) for a, v in report.envelope[m].items()} for m in METRIC_NAMES
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
