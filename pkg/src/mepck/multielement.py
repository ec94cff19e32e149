"""Piecewise global surrogate assembled from per-cell local models.

Each cell of a partition carries its own trend-plus-residual model fitted on
a space-filling design confined to the cell; the global prediction simply
delegates to the cell owning the query point, so faces inherit the
partition's half-open ownership rule and no continuity is enforced across
them. Splitting priority follows the total sensitivity indices of a pilot
expansion fitted over the full domain.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .design_space import Cell, Domain, Partition, split_regular
from .kriging import GaConfig, PckModel, fit_pck
from .metrics import nrmse
from .pce import (
    DEFAULT_DEGREES,
    DEFAULT_QNORM,
    EdSizeWarning,
    SparsePce,
    fit_sparse_pce,
    generate_hyperbolic,
    sobol_indices,
)
from .sampling import DEFAULT_N_CANDIDATES, ExperimentalDesign, mipt_fill

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellReport:
    cell_index: int
    n_design: int
    n_terms: int
    theta: np.ndarray
    sigma2: float
    nugget: float
    fit_seconds: float


@dataclass(frozen=True)
class MultielementPck:
    """One local model per partition cell plus build diagnostics."""

    partition: Partition
    locals: tuple
    report: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.locals) != self.partition.n_cells:
            raise ValueError("need exactly one local model per cell")

    @property
    def n_cells(self) -> int:
        return self.partition.n_cells

    def predict(self, x) -> float:
        j = self.partition.locate(x)
        return self.locals[j].predict(x)

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        idx = self.partition.locate_many(X)
        out = np.empty(X.shape[0])
        for j in np.unique(idx):
            mask = idx == j
            out[mask] = self.locals[j].predict_many(X[mask])
        return out

    def design_union(self) -> ExperimentalDesign:
        """All per-cell designs in physical coordinates, tagged by cell."""
        xs, ys, tags = [], [], []
        for j, local in enumerate(self.locals):
            cell = self.partition.cells[j]
            xs.append(cell.destandardize(local.design_u))
            ys.append(local.design_y)
            tags.append(np.full(local.n_design, j))
        return ExperimentalDesign(
            np.vstack(xs), np.concatenate(ys), np.concatenate(tags), validate=False
        )


def predict_global(model: MultielementPck, x) -> float:
    return model.predict(x)


def _fit_cell(cell, ed, j, degrees, q, ga_config, rng):
    mask = cell.contains_many(ed.inputs)
    t0 = time.perf_counter()
    local = fit_pck(
        ed.inputs[mask],
        ed.outputs[mask],
        cell,
        degrees=degrees,
        q=q,
        ga_config=ga_config,
        rng=rng,
    )
    report = CellReport(
        cell_index=j,
        n_design=int(np.count_nonzero(mask)),
        n_terms=local.trend.n_terms,
        theta=local.hyper.theta,
        sigma2=local.hyper.sigma2,
        nugget=local.nugget,
        fit_seconds=time.perf_counter() - t0,
    )
    return local, report


def build(
    forward,
    domain: Domain,
    counts,
    per_cell_n: int,
    rng=None,
    n_candidates: int = DEFAULT_N_CANDIDATES,
    degrees=DEFAULT_DEGREES,
    q: float = DEFAULT_QNORM,
    ga_config: GaConfig = GaConfig(),
    existing_ed: ExperimentalDesign | None = None,
) -> MultielementPck:
    """Partition the domain, fill each cell to ``per_cell_n`` samples, and
    fit one local model per cell."""
    rng = np.random.default_rng(rng)
    partition = split_regular(domain, counts)
    max_basis = max(
        generate_hyperbolic(domain.ndim, p, q).shape[0] for p in degrees
    )
    if per_cell_n < 2 * max_basis:
        warnings.warn(
            f"per_cell_n={per_cell_n} is below twice the largest candidate "
            f"basis ({max_basis} terms)",
            EdSizeWarning,
            stacklevel=2,
        )
    ed = existing_ed if existing_ed is not None else ExperimentalDesign.empty(domain.ndim)
    locals_, reports = [], []
    for j, cell in enumerate(partition.cells):
        ed = mipt_fill(ed, cell, per_cell_n, n_candidates, rng, forward, cell_tag=j)
        try:
            local, report = _fit_cell(cell, ed, j, degrees, q, ga_config, rng)
        except Exception as exc:
            raise RuntimeError(f"fit failed in cell {j}: {exc}") from exc
        locals_.append(local)
        reports.append(report)
        logger.info(
            "cell %d/%d: N=%d, %d trend terms, %.1fs",
            j + 1, partition.n_cells, report.n_design, report.n_terms,
            report.fit_seconds,
        )
    return MultielementPck(partition, tuple(locals_), tuple(reports))


def fit_pilot(model_or_ed, domain: Domain, degrees=DEFAULT_DEGREES, q=DEFAULT_QNORM) -> SparsePce:
    """Full-domain expansion used only to rank split directions."""
    ed = (
        model_or_ed.design_union()
        if isinstance(model_or_ed, MultielementPck)
        else model_or_ed
    )
    U = domain.standardize(ed.inputs)
    return fit_sparse_pce(U, ed.outputs, degrees=degrees, q=q, box=domain)


def rank_split_directions(pilot: SparsePce) -> list[int]:
    """Dimensions ordered by descending total sensitivity, ties by index."""
    _, total = sobol_indices(pilot)
    return sorted(range(total.size), key=lambda i: (-total[i], i))


def refine(
    model: MultielementPck,
    forward,
    accuracy_goal: float,
    min_per_cell: int,
    max_rounds: int,
    validation_inputs,
    validation_outputs,
    rng=None,
    n_candidates: int = DEFAULT_N_CANDIDATES,
    degrees=DEFAULT_DEGREES,
    q: float = DEFAULT_QNORM,
    ga_config: GaConfig = GaConfig(),
):
    """Bisect every cell along Sobol-ranked directions until the validation
    error meets the goal or the round budget runs out.

    Returns ``(model, trace, converged)`` where ``trace`` holds the
    validation NRMSE after each round (the initial model first). Existing
    samples are kept; children are refilled to ``min_per_cell`` each.
    """
    rng = np.random.default_rng(rng)
    X_val = np.atleast_2d(np.asarray(validation_inputs, dtype=float))
    y_val = np.asarray(validation_outputs, dtype=float)
    domain = model.partition.parent

    trace = [nrmse(y_val, model.predict_many(X_val))]
    if trace[-1] <= accuracy_goal:
        return model, trace, True

    try:
        order = rank_split_directions(fit_pilot(model, domain, degrees, q))
    except ValueError:
        # uninformative pilot (intercept-only fit); fall back to round-robin
        logger.warning("pilot expansion is constant; splitting dimensions in order")
        order = list(range(domain.ndim))
    ed = model.design_union()
    cells = list(model.partition.cells)

    for round_idx in range(max_rounds):
        direction = order[round_idx % len(order)]
        cells = [child for cell in cells for child in cell.bisect(direction)]
        partition = Partition(domain, cells)
        locals_, reports = [], []
        for j, cell in enumerate(partition.cells):
            ed = mipt_fill(ed, cell, min_per_cell, n_candidates, rng, forward, cell_tag=j)
            local, report = _fit_cell(cell, ed, j, degrees, q, ga_config, rng)
            locals_.append(local)
            reports.append(report)
        model = MultielementPck(partition, tuple(locals_), tuple(reports))
        trace.append(nrmse(y_val, model.predict_many(X_val)))
        logger.info(
            "refine round %d: split dim %d, %d cells, NRMSE %.3e",
            round_idx + 1, direction, partition.n_cells, trace[-1],
        )
        if trace[-1] <= accuracy_goal:
            return model, trace, True
    return model, trace, False


def face_jump_stats(model: MultielementPck, rng=None, n_pairs: int = 2000) -> dict:
    """Prediction-jump statistics across interior faces (diagnostic only).

    Samples point pairs straddling randomly chosen interior faces at a tiny
    offset and reports the absolute prediction jumps.
    """
    rng = np.random.default_rng(rng)
    domain = model.partition.parent
    cells = model.partition.cells
    eps = 1e-7 * domain.widths
    jumps = []
    for _ in range(n_pairs):
        j = int(rng.integers(0, len(cells)))
        cell = cells[j]
        d = int(rng.integers(0, domain.ndim))
        interior_faces = []
        if cell.lower[d] > domain.lower[d]:
            interior_faces.append(cell.lower[d])
        if cell.upper[d] < domain.upper[d]:
            interior_faces.append(cell.upper[d])
        if not interior_faces:
            continue
        face = interior_faces[int(rng.integers(0, len(interior_faces)))]
        x = cell.lower + rng.random(domain.ndim) * cell.widths
        x_lo, x_hi = x.copy(), x.copy()
        x_lo[d] = face - eps[d]
        x_hi[d] = face + eps[d]
        if domain.contains(x_lo) and domain.contains(x_hi):
            jumps.append(abs(model.predict(x_hi) - model.predict(x_lo)))
    jumps = np.asarray(jumps)
    if jumps.size == 0:
        return {"n_pairs": 0, "mean_jump": 0.0, "max_jump": 0.0}
    return {
        "n_pairs": int(jumps.size),
        "mean_jump": float(jumps.mean()),
        "max_jump": float(jumps.max()),
    }
