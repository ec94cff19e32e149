"""Experimental designs and intersite-distance exploration sampling.

New samples are drawn by scoring a large Monte Carlo candidate pool on its
minimum Euclidean distance to the points already in the design and keeping
the farthest candidate, which spreads the design without clustering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

#: Monte Carlo candidate pool size used throughout the studies.
DEFAULT_N_CANDIDATES = 25_000


class ForwardEvalError(RuntimeError):
    """Forward-model failure, carrying the offending input point."""

    def __init__(self, x, cause):
        self.x = np.asarray(x, dtype=float)
        self.cause = cause
        super().__init__(f"forward model failed at {self.x!r}: {cause}")


def _as_rng(rng):
    """Accept seeds, Generators, or duck-typed stubs exposing ``random``."""
    if rng is not None and hasattr(rng, "random"):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class ExperimentalDesign:
    """Paired input samples and forward-model responses.

    ``cell_tag`` optionally records which subdomain each row was drawn in.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    cell_tag: np.ndarray | None = None

    def __init__(self, inputs, outputs, cell_tag=None, validate=True):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        outputs = np.atleast_1d(np.asarray(outputs, dtype=float))
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError("inputs and outputs must have the same number of rows")
        if cell_tag is not None:
            cell_tag = np.atleast_1d(np.asarray(cell_tag, dtype=int))
            if cell_tag.shape[0] != inputs.shape[0]:
                raise ValueError("cell_tag must have one entry per row")
        if validate and inputs.shape[0] > 1:
            if min_pairwise_distance(inputs) <= 0.0:
                raise ValueError("experimental design contains duplicate input rows")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "cell_tag", cell_tag)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def ndim(self) -> int:
        return self.inputs.shape[1]

    @staticmethod
    def empty(ndim: int) -> "ExperimentalDesign":
        return ExperimentalDesign(
            np.empty((0, ndim)), np.empty(0), np.empty(0, dtype=int)
        )


def min_pairwise_distance(points) -> float:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        return np.inf
    d, _ = cKDTree(points).query(points, k=2)
    return float(d[:, 1].min())


def _draw_candidates(box, n_candidates, rng):
    u = rng.random((n_candidates, box.lower.size))
    return box.lower + u * (box.upper - box.lower)


def mipt_next(ed, box, n_candidates=DEFAULT_N_CANDIDATES, rng=None) -> np.ndarray:
    """Candidate (among ``n_candidates`` uniform draws in ``box``) farthest
    from the design points already inside the box.

    With no design points in the box the first candidate is returned. Ties
    are broken by keeping the first candidate encountered.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    rng = _as_rng(rng)
    cand = _draw_candidates(box, n_candidates, rng)
    if ed is None or len(ed) == 0:
        return cand[0]
    existing = ed.inputs[box.contains_many(ed.inputs)]
    if existing.shape[0] == 0:
        return cand[0]
    d, _ = cKDTree(existing).query(cand)
    return cand[int(np.argmax(d))]


def mipt_fill(
    ed,
    box,
    target_n,
    n_candidates=DEFAULT_N_CANDIDATES,
    rng=None,
    forward=None,
    cell_tag=None,
) -> ExperimentalDesign:
    """Enrich the design inside ``box`` until it holds ``target_n`` points.

    Existing samples are retained; each accepted point is evaluated with
    ``forward`` before the next one is scored, so the loop is sequential.
    """
    rng = _as_rng(rng)
    if ed is None:
        ed = ExperimentalDesign.empty(box.lower.size)
    in_box = int(np.count_nonzero(box.contains_many(ed.inputs))) if len(ed) else 0
    if target_n < in_box:
        raise ValueError(f"target_n={target_n} below current count {in_box} in box")

    new_x = []
    new_y = []
    work = ed
    for _ in range(target_n - in_box):
        x = mipt_next(work, box, n_candidates, rng)
        try:
            y = float(forward(x))
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise ForwardEvalError(x, exc) from exc
        new_x.append(x)
        new_y.append(y)
        work = ExperimentalDesign(
            np.vstack([work.inputs, x[None, :]]),
            np.append(work.outputs, y),
            validate=False,
        )
    if not new_x:
        return ed

    tag = ed.cell_tag
    if tag is None:
        tag = np.zeros(len(ed), dtype=int)
    new_tag = np.full(len(new_x), 0 if cell_tag is None else int(cell_tag), dtype=int)
    return ExperimentalDesign(
        np.vstack([ed.inputs, np.asarray(new_x)]),
        np.append(ed.outputs, np.asarray(new_y)),
        np.append(tag, new_tag),
        validate=False,
    )


def save_ed_csv(path, ed: ExperimentalDesign) -> None:
    """Write the design as ``x1,...,xM,y`` rows in full double precision."""
    m = ed.ndim
    header = ",".join([f"x{i + 1}" for i in range(m)] + ["y"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, y in zip(ed.inputs, ed.outputs):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(y)!r}\n")


def load_ed_csv(path) -> ExperimentalDesign:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ExperimentalDesign(data[:, :-1], data[:, -1])
