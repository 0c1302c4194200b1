"""Control-functional estimators built on the Stein kernel.

The estimators here approximate mu(f), the expectation of an integrand f
under a target density pi, from cached samples, scores and function values.
A surrogate s(x) = c_hat + sum_i beta_i k0(x_i, x) is fitted to f on a subset
D0 by regularised least squares over the space of constants plus Stein-kernel
functions; because every Stein-kernel function integrates to zero against pi,
the surrogate's exact mean is c_hat.  The sample-splitting estimator corrects
the surrogate mean with the residual average over the held-out subset D1,

    mu_hat = mean_{D1}(f - f_hat) + c_hat,

which is unbiased when D1 is an IID sample from pi.  The simplified estimator
keeps only c_hat with all samples used for fitting; it trades a small bias for
lower variance.  A computable discrepancy D(D0, D1) bounds the worst-case
error over the unit ball of the hypothesis space:

    |mu_hat - mu(f)| <= sqrt(D(D0, D1)) * ||f||.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import ScoredDataset, SplitPlan, random_split
from .errors import InvalidInputError, NumericalError, SingularMatrixError
from .kernel import (
    SteinKernelParams,
    assemble_matrices,
    gram_matrix,
    stein_kernel_matrix,
)

# Regularisation grid: powers of 10 from 1e-16 up to 1.
LAMBDA_GRID = tuple(10.0**k for k in range(-16, 1))

# A factorisation is accepted once cond_2 of the jittered matrix is below this.
CONDITION_LIMIT = 1e10


def select_lambda(k0: np.ndarray) -> float:
    """Pick the smallest grid regularisation that conditions the kernel system.

    Returns the smallest ``lam`` in :data:`LAMBDA_GRID` such that
    ``cond_2(k0 + lam*m*I) < 1e10``, where ``m`` is the matrix size and
    ``lam*m*I`` is the jitter actually applied when the system is factorised.
    The condition number is evaluated from the extreme eigenvalues of ``k0``,
    computed once.  If even ``lam = 1`` fails, 1.0 is returned with a warning.
    """
    k0 = np.asarray(k0, dtype=float)
    if k0.ndim != 2 or k0.shape[0] != k0.shape[1]:
        raise InvalidInputError(f"k0 must be square, got shape {k0.shape}")
    if not np.all(np.isfinite(k0)):
        raise InvalidInputError("k0 contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(k0))))
    if not np.allclose(k0, k0.T, rtol=0.0, atol=1e-12 * scale):
        raise InvalidInputError("k0 must be symmetric")
    m = k0.shape[0]
    evals = np.linalg.eigvalsh(k0)
    lo_base, hi_base = float(evals[0]), float(evals[-1])
    for lam in LAMBDA_GRID:
        lo = lo_base + lam * m
        hi = hi_base + lam * m
        if lo > 0.0 and hi / lo < CONDITION_LIMIT:
            return lam
    warnings.warn(
        "kernel matrix remains ill-conditioned even with unit regularisation",
        RuntimeWarning,
        stacklevel=2,
    )
    return 1.0


def _factorise(k0: np.ndarray, lam: float):
    """Cholesky factorisation of k0 + lam*m*I."""
    m = k0.shape[0]
    system = k0 + (lam * m) * np.eye(m)
    try:
        return cho_factor(system, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"kernel system of size {m} could not be factorised with lambda={lam!r}; "
            "try a larger regularisation parameter"
        ) from exc


def _fit_coefficients(k0: np.ndarray, f0: np.ndarray, lam: float):
    """Solve for (c_hat, beta) given the Gram matrix of the fitting set.

    c_hat = 1'(K0 + lam*m*I)^-1 f0 / (1 + 1'(K0 + lam*m*I)^-1 1) and
    beta = (K0 + lam*m*I)^-1 (f0 - c_hat*1).  Returns the factorisation too so
    callers can reuse it for further solves.
    """
    chol = _factorise(k0, lam)
    ones = np.ones(k0.shape[0])
    z = cho_solve(chol, ones)
    y = cho_solve(chol, f0)
    c_hat = float(ones @ y) / (1.0 + float(ones @ z))
    beta = y - c_hat * z
    return c_hat, beta, chol, z


@dataclass(frozen=True)
class SurrogateFit:
    """Fitted surrogate s(x) = c_hat + sum_i beta_i k0(node_i, x)."""

    c_hat: float
    beta: np.ndarray
    node_points: np.ndarray
    node_scores: np.ndarray
    lambda_: float
    params: SteinKernelParams

    def __post_init__(self):
        if self.beta.shape[0] != self.node_points.shape[0]:
            raise InvalidInputError("beta length must equal the number of nodes")
        if self.lambda_ < 0:
            raise InvalidInputError("lambda must be non-negative")


@dataclass(frozen=True)
class Estimate:
    """An estimator value together with how it was produced.

    ``term_star`` is the held-out residual average, ``term_star_star`` the
    surrogate mean; when both are present their sum is the value.
    """

    value: float
    method: str
    n: int
    m: int
    lambda_used: float
    term_star: float | None = None
    term_star_star: float | None = None
    discrepancy: float | None = None
    n_splits: int | None = None

    def __post_init__(self):
        if self.term_star is not None and self.term_star_star is not None:
            total = self.term_star + self.term_star_star
            if abs(self.value - total) > 1e-12 * max(1.0, abs(self.value)):
                raise NumericalError(
                    f"estimate value {self.value} does not decompose into "
                    f"{self.term_star} + {self.term_star_star}"
                )
        if self.discrepancy is not None and self.discrepancy < 0:
            raise InvalidInputError("discrepancy must be non-negative")

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "n": self.n,
            "m": self.m,
            "lambda_used": self.lambda_used,
            "term_star": self.term_star,
            "term_star_star": self.term_star_star,
            "discrepancy": self.discrepancy,
            "n_splits": self.n_splits,
        }


def fit_surrogate(d0: ScoredDataset, params: SteinKernelParams, lambda_: float) -> SurrogateFit:
    """Fit the regularised least-squares surrogate on the fitting set ``d0``."""
    if lambda_ < 0:
        raise InvalidInputError("lambda must be non-negative")
    k0 = gram_matrix(d0, params)
    c_hat, beta, _, _ = _fit_coefficients(k0, d0.f_values, lambda_)
    return SurrogateFit(
        c_hat=c_hat,
        beta=beta,
        node_points=d0.points,
        node_scores=d0.scores,
        lambda_=lambda_,
        params=params,
    )


def predict_surrogate(fit: SurrogateFit, x, u_x):
    """Evaluate the fitted surrogate at one point or a batch of points.

    ``x`` may be a single d-vector (returns a float) or a (p, d) array
    (returns a length-p array); ``u_x`` must carry the matching scores.
    """
    x = np.asarray(x, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    single = x.ndim == 1
    cross = stein_kernel_matrix(
        np.atleast_2d(x), np.atleast_2d(u_x), fit.node_points, fit.node_scores, fit.params
    )
    values = fit.c_hat + cross @ fit.beta
    return float(values[0]) if single else values


def cf_split_estimate(
    data: ScoredDataset,
    plan: SplitPlan,
    params: SteinKernelParams,
    lambda_: float | None = None,
    compute_discrepancy: bool = False,
) -> Estimate:
    """Sample-splitting control-functional estimate of mu(f).

    Fits the surrogate on the ``m`` samples selected by ``plan`` and averages
    the residual over the remaining ``n - m``:

        value = mean(f1 - f1_hat) + c_hat.

    ``lambda_`` defaults to the automatic conditioning rule.  With
    ``compute_discrepancy=True`` the worst-case error constant D(D0, D1) is
    attached to the estimate.
    """
    d0, d1 = plan.apply(data)
    if d1 is None:
        raise InvalidInputError("plan leaves no evaluation samples; use cf_simplified_estimate")
    k0 = gram_matrix(d0, params)
    k10 = stein_kernel_matrix(d1.points, d1.scores, d0.points, d0.scores, params)
    lam = select_lambda(k0) if lambda_ is None else float(lambda_)
    c_hat, beta, chol, z = _fit_coefficients(k0, d0.f_values, lam)
    f1_hat = c_hat + k10 @ beta
    star = float(np.mean(d1.f_values - f1_hat))
    disc = None
    if compute_discrepancy:
        k1 = gram_matrix(d1, params)
        disc = discrepancy_from_matrices(k0, k10, k1, lambda_=lam)
    return Estimate(
        value=star + c_hat,
        method="cf-split",
        n=data.n,
        m=plan.m,
        lambda_used=lam,
        term_star=star,
        term_star_star=c_hat,
        discrepancy=disc,
    )


def cf_simplified_estimate(
    data: ScoredDataset, params: SteinKernelParams, lambda_: float | None = None
) -> Estimate:
    """Simplified control-functional estimate: the surrogate mean with m = n.

    value = 1'(K0 + lam*n*I)^-1 f / (1 + 1'(K0 + lam*n*I)^-1 1).  Biased but
    typically lower variance than the sample-splitting estimator.
    """
    k0 = gram_matrix(data, params)
    lam = select_lambda(k0) if lambda_ is None else float(lambda_)
    c_hat, _, _, _ = _fit_coefficients(k0, data.f_values, lam)
    return Estimate(
        value=c_hat,
        method="cf-simplified",
        n=data.n,
        m=data.n,
        lambda_used=lam,
        term_star=None,
        term_star_star=c_hat,
    )


def cf_weights(
    data: ScoredDataset,
    plan: SplitPlan,
    params: SteinKernelParams,
    lambda_: float | None = None,
) -> np.ndarray:
    """Weights w such that w @ f reproduces the sample-splitting estimate.

    The weights depend only on the points, scores and split, never on f, so a
    single weight vector prices any number of integrands on the same samples.
    Entries are returned in the original dataset order.  Note the exact column
    sum is 1 - 1'K10 A^-1 1 / ((n-m)(1 + 1'A^-1 1)) with A = K0 + lam*m*I;
    it approaches 1 only because Stein-kernel columns average to zero under
    the target.
    """
    d0, d1 = plan.apply(data)
    if d1 is None:
        raise InvalidInputError("weights require at least one evaluation sample (m < n)")
    k0 = gram_matrix(d0, params)
    k10 = stein_kernel_matrix(d1.points, d1.scores, d0.points, d0.scores, params)
    lam = select_lambda(k0) if lambda_ is None else float(lambda_)
    chol = _factorise(k0, lam)
    m, n_minus_m = plan.m, d1.n
    ones_m = np.ones(m)
    ones_eval = np.ones(n_minus_m)
    z = cho_solve(chol, ones_m)
    q = float(ones_m @ z)
    h = cho_solve(chol, k10.T @ ones_eval)
    s = float(ones_m @ h)
    w0 = -h / n_minus_m + (s / (n_minus_m * (1.0 + q))) * z
    w = np.empty(data.n)
    w[plan.index_d0] = w0
    w[plan.index_d1] = 1.0 / n_minus_m
    return w


def cf_multisplit_estimate(
    data: ScoredDataset,
    n_splits: int,
    split_fraction: float,
    params: SteinKernelParams,
    seed,
    lambda_: float | None = None,
) -> Estimate:
    """Average the sample-splitting estimator over random splits.

    Split k uses the stream derived from ``(seed, k)``; the average is taken
    in split order, so results do not depend on any execution schedule.
    Averaging over independent splits keeps the estimator unbiased.
    """
    if n_splits < 1:
        raise InvalidInputError(f"n_splits must be >= 1, got {n_splits}")
    if not 0.0 < split_fraction < 1.0:
        raise InvalidInputError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    n = data.n
    m = math.ceil(split_fraction * n)
    if not 1 <= m < n:
        raise InvalidInputError(
            f"split_fraction {split_fraction} gives degenerate split m={m} of n={n}"
        )
    values = np.empty(n_splits)
    lam_used = None
    for k in range(n_splits):
        plan = random_split(n, m, seed, index=k)
        est = cf_split_estimate(data, plan, params, lambda_=lambda_)
        values[k] = est.value
        if lam_used is None:
            lam_used = est.lambda_used
    return Estimate(
        value=float(np.mean(values)),
        method="cf-multisplit",
        n=n,
        m=m,
        lambda_used=lam_used,
        n_splits=n_splits,
    )


def discrepancy_from_matrices(
    k0: np.ndarray, k10: np.ndarray, k1: np.ndarray, lambda_: float = 0.0
) -> float:
    """Worst-case error constant D(D0, D1) from pre-computed kernel blocks.

    With A = K0 + lam*m*I,

        D = [ (1'K10 A^-1 1)^2 / (1 + 1'A^-1 1) - 1'K10 A^-1 K01 1 + 1'K1 1 ]
            / (n - m)^2,

    which equals (1'w - 1)^2 + w'Kw for the estimator weight vector w and the
    full Gram matrix K, i.e. the squared worst-case estimation error over the
    unit ball of the hypothesis space.  For a kernel with k0(x, x) = 1 and no
    off-diagonal mass it reduces to 1/(n - m).
    """
    k0 = np.asarray(k0, dtype=float)
    k10 = np.asarray(k10, dtype=float)
    k1 = np.asarray(k1, dtype=float)
    n_minus_m = k10.shape[0]
    if n_minus_m < 1:
        raise InvalidInputError("discrepancy requires at least one evaluation sample")
    chol = _factorise(k0, lambda_)
    ones_m = np.ones(k0.shape[0])
    ones_eval = np.ones(n_minus_m)
    z = cho_solve(chol, ones_m)
    q = float(ones_m @ z)
    g = k10.T @ ones_eval
    h = cho_solve(chol, g)
    s = float(ones_m @ h)
    value = (s * s / (1.0 + q) - float(g @ h) + float(ones_eval @ k1 @ ones_eval)) / (
        n_minus_m * n_minus_m
    )
    if value < -1e-10:
        raise NumericalError(f"discrepancy evaluated to {value}, below tolerance")
    return max(value, 0.0)


def discrepancy(
    d0: ScoredDataset,
    d1: ScoredDataset,
    params: SteinKernelParams,
    lambda_: float | None = None,
) -> float:
    """Worst-case error constant D(D0, D1) for the given split datasets.

    ``lambda_`` defaults to the same conditioning rule used for estimation;
    pass an explicit (small) value to approximate the unregularised constant.
    """
    if d0 is None or d0.n < 1 or d1 is None or d1.n < 1:
        raise InvalidInputError("d0 and d1 must both be non-empty")
    bundle = assemble_matrices(d0, d1, params)
    lam = select_lambda(bundle.k0) if lambda_ is None else float(lambda_)
    return discrepancy_from_matrices(bundle.k0, bundle.k10, bundle.k1, lambda_=lam)


def cross_validate(
    d0: ScoredDataset,
    grid,
    train_fraction: float = 0.5,
    seed=0,
) -> SteinKernelParams:
    """Select kernel hyper-parameters by hold-out prediction error on ``d0``.

    ``d0`` is split once into a training part of ``ceil(train_fraction * m)``
    samples and a test part; every candidate is fitted on the training part
    (with the automatic regularisation rule) and scored by the l2 norm of its
    prediction error on the test part.  The candidate with the smallest error
    wins; ties go to the earliest grid entry.  The split uses a dedicated
    stream derived from ``seed`` so selection never perturbs estimation
    randomness.
    """
    grid = list(grid)
    if not grid:
        raise InvalidInputError("grid must contain at least one candidate")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    m = d0.n
    m_train = math.ceil(train_fraction * m)
    if m_train < 2 or m - m_train < 1:
        raise InvalidInputError(
            f"train_fraction {train_fraction} of {m} samples leaves too few points "
            f"(train={m_train}, test={m - m_train})"
        )
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(seq))
    perm = rng.permutation(m)
    train = d0.subset(perm[:m_train])
    test = d0.subset(perm[m_train:])
    errors = np.full(len(grid), np.inf)
    failures = []
    for i, cand in enumerate(grid):
        try:
            k0 = gram_matrix(train, cand)
            lam = select_lambda(k0)
            c_hat, beta, _, _ = _fit_coefficients(k0, train.f_values, lam)
            cross = stein_kernel_matrix(
                test.points, test.scores, train.points, train.scores, cand
            )
            predicted = c_hat + cross @ beta
            errors[i] = float(np.linalg.norm(test.f_values - predicted))
        except (InvalidInputError, SingularMatrixError, NumericalError, OverflowError) as exc:
            failures.append(f"candidate {i} ({cand}): {exc}")
    if not np.any(np.isfinite(errors)):
        raise NumericalError("all cross-validation fits failed:\n" + "\n".join(failures))
    return grid[int(np.argmin(errors))]


@dataclass(frozen=True)
class RkhsTestFunction:
    """An explicit element f = c + sum_j gamma_j k0(center_j, .) of the
    hypothesis space, with known norm and exact mean.

    Because every Stein-kernel function has zero mean under the target, the
    exact mean of f is the constant c, and the squared norm decomposes as
    c^2 + gamma' K0 gamma over the centers.  Used to verify the worst-case
    error bound by construction.
    """

    c: float
    centers: np.ndarray
    center_scores: np.ndarray
    gamma: np.ndarray
    params: SteinKernelParams

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        center_scores = np.atleast_2d(np.asarray(self.center_scores, dtype=float))
        gamma = np.asarray(self.gamma, dtype=float)
        if centers.shape != center_scores.shape:
            raise InvalidInputError("center_scores must match centers")
        if gamma.shape != (centers.shape[0],):
            raise InvalidInputError("gamma must have one coefficient per center")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "center_scores", center_scores)
        object.__setattr__(self, "gamma", gamma)

    @property
    def exact_mean(self) -> float:
        return self.c

    def evaluate(self, points, scores) -> np.ndarray:
        """Values of f at the given points (scores must match the points)."""
        cross = stein_kernel_matrix(
            np.atleast_2d(points), np.atleast_2d(scores), self.centers, self.center_scores,
            self.params,
        )
        return self.c + cross @ self.gamma

    def norm_hplus(self) -> float:
        """Hypothesis-space norm sqrt(c^2 + gamma' K0 gamma)."""
        k0 = stein_kernel_matrix(
            self.centers, self.center_scores, self.centers, self.center_scores, self.params
        )
        k0 = np.triu(k0) + np.triu(k0, k=1).T
        quad = float(self.gamma @ k0 @ self.gamma)
        return math.sqrt(self.c**2 + max(quad, 0.0))
