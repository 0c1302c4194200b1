"""Sample containers and the on-disk sample-file format.

A :class:`ScoredDataset` is the sole interface between the estimators and the
statistical model: it carries sample points, cached score vectors
``u(x) = grad log pi(x)`` (``pi`` may be un-normalised) and cached integrand
values ``f(x)``.  Nothing downstream ever evaluates the model again.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InvalidInputError


def _as_finite_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ScoredDataset:
    """Sample points with cached scores and integrand values.

    Parameters
    ----------
    points : (n, d) array
        Sample coordinates.
    scores : (n, d) array
        Score vectors ``u(x_i) = grad log pi(x_i)`` evaluated at the points.
    f_values : (n,) array
        Integrand values ``f(x_i)``.
    """

    points: np.ndarray
    scores: np.ndarray
    f_values: np.ndarray

    def __post_init__(self):
        points = _as_finite_array(self.points, "points", 2)
        scores = _as_finite_array(self.scores, "scores", 2)
        f_values = _as_finite_array(self.f_values, "f_values", 1)
        if points.shape[0] < 1:
            raise InvalidInputError("dataset must contain at least one sample")
        if points.shape[1] < 1:
            raise InvalidInputError("dimension must be at least 1")
        if scores.shape != points.shape:
            raise InvalidInputError(
                f"scores shape {scores.shape} does not match points shape {points.shape}"
            )
        if f_values.shape[0] != points.shape[0]:
            raise InvalidInputError(
                f"f_values length {f_values.shape[0]} does not match {points.shape[0]} points"
            )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "f_values", f_values)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, indices) -> "ScoredDataset":
        idx = np.asarray(indices, dtype=int)
        return ScoredDataset(self.points[idx], self.scores[idx], self.f_values[idx])


@dataclass(frozen=True)
class SplitPlan:
    """A dichotomy of ``0..n-1`` into a fitting set and an evaluation set.

    ``index_d0`` selects the ``m`` fitting samples, ``index_d1`` the remaining
    evaluation samples; together they must cover every index exactly once.
    """

    m: int
    index_d0: np.ndarray
    index_d1: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        d0 = np.asarray(self.index_d0, dtype=int)
        d1 = np.asarray(self.index_d1, dtype=int)
        n = d0.size + d1.size
        if not (1 <= self.m <= n):
            raise InvalidInputError(f"m={self.m} must satisfy 1 <= m <= n={n}")
        if d0.size != self.m:
            raise InvalidInputError(f"index_d0 has {d0.size} entries, expected m={self.m}")
        combined = np.concatenate([d0, d1])
        if not np.array_equal(np.sort(combined), np.arange(n)):
            raise InvalidInputError("index_d0 and index_d1 must partition 0..n-1")
        object.__setattr__(self, "index_d0", d0)
        object.__setattr__(self, "index_d1", d1)

    @property
    def n(self) -> int:
        return self.index_d0.size + self.index_d1.size

    def apply(self, data: ScoredDataset) -> tuple[ScoredDataset, "ScoredDataset | None"]:
        """Split ``data`` into (fitting set, evaluation set or ``None``)."""
        if data.n != self.n:
            raise InvalidInputError(f"plan covers {self.n} samples, dataset has {data.n}")
        d0 = data.subset(self.index_d0)
        d1 = data.subset(self.index_d1) if self.index_d1.size else None
        return d0, d1


def random_split(n: int, m: int, seed, index: int = 0) -> SplitPlan:
    """Draw a uniformly random split of ``n`` samples with ``|D0| = m``.

    ``index`` selects an independent stream derived from ``seed``, so a family
    of splits (e.g. for multi-splitting) is reproducible and order-free.
    """
    if not (1 <= m <= n):
        raise InvalidInputError(f"m={m} must satisfy 1 <= m <= n={n}")
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    stream = np.random.SeedSequence(entropy=seq.entropy, spawn_key=tuple(seq.spawn_key) + (index,))
    rng = np.random.Generator(np.random.Philox(stream))
    perm = rng.permutation(n)
    base_seed = seed if isinstance(seed, int) else None
    return SplitPlan(m=m, index_d0=perm[:m], index_d1=perm[m:], seed=base_seed)


def sample_file_header(dimension: int) -> list[str]:
    """Canonical header: ``x_1..x_d, f, u_1..u_d``."""
    return (
        [f"x_{j + 1}" for j in range(dimension)]
        + ["f"]
        + [f"u_{j + 1}" for j in range(dimension)]
    )


def write_sample_file(path, data: ScoredDataset) -> None:
    """Write ``data`` as a comma-delimited sample file.

    Floats are written with ``repr`` so a read-back is value-identical.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(sample_file_header(data.dimension))
        for i in range(data.n):
            row = (
                [repr(float(v)) for v in data.points[i]]
                + [repr(float(data.f_values[i]))]
                + [repr(float(v)) for v in data.scores[i]]
            )
            writer.writerow(row)


def read_sample_file(path) -> ScoredDataset:
    """Read a sample file written in the format of :func:`write_sample_file`.

    Raises
    ------
    DataFormatError
        On a malformed header, an inconsistent row, or a value that does not
        parse as a finite real.  Messages name the offending line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or len(header) % 2 == 0:
            raise DataFormatError(
                f"{path}: header must be x_1..x_d, f, u_1..u_d, got {header}"
            )
        d = (len(header) - 1) // 2
        if header != sample_file_header(d):
            raise DataFormatError(
                f"{path}: header must be x_1..x_d, f, u_1..u_d, got {header}"
            )
        points, scores, f_values = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 * d + 1:
                raise DataFormatError(
                    f"{path}: line {line_no}: expected {2 * d + 1} fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {line_no}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DataFormatError(f"{path}: line {line_no}: non-finite value")
            points.append(values[:d])
            f_values.append(values[d])
            scores.append(values[d + 1 :])
    if not points:
        raise DataFormatError(f"{path}: no data rows")
    return ScoredDataset(
        points=np.asarray(points), scores=np.asarray(scores), f_values=np.asarray(f_values)
    )
