"""Shipped collocation fixtures and the spectral machinery behind them.

The interval models use Legendre-Gauss-Lobatto collocation. With LGL points
and weights the quadrature is exact through degree 2N-1, which upgrades the
discrete integration-by-parts identity to an exact matrix identity

    W D + D^T W = diag(-1, 0, ..., 0, 1)

(up to roundoff). Every invariant downstream that quantifies over all state
vectors, not just smooth ones, leans on this.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import InvalidInputError
from .linalg import GramMatrix
from .tuples import (
    BoundaryTupleModel,
    OperatorModel,
    TupleFixture,
    TupleTransform,
    green_defect,
)

__all__ = [
    "lgl_points_weights",
    "differentiation_matrix",
    "transport_fixture",
    "fixture_registry",
    "get_fixture",
    "GreenCheckResult",
    "green_check",
]


def lgl_points_weights(n_points: int):
    """Legendre-Gauss-Lobatto points and weights on [-1, 1]."""
    if n_points < 2:
        raise InvalidInputError("need at least 2 collocation points")
    n = n_points - 1
    coeffs = np.zeros(n + 1)
    coeffs[-1] = 1.0
    dcoeffs = npleg.legder(coeffs)
    interior = np.real(npleg.legroots(dcoeffs))
    x = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    # two Newton sweeps on P_n' sharpen the companion-matrix roots to ~1e-16
    d2 = npleg.legder(coeffs, 2)
    for _ in range(2):
        x[1:-1] -= npleg.legval(x[1:-1], dcoeffs) / npleg.legval(x[1:-1], d2)
    w = 2.0 / (n * (n + 1) * npleg.legval(x, coeffs) ** 2)
    return x, w


def differentiation_matrix(x: np.ndarray) -> np.ndarray:
    """Polynomial collocation derivative at arbitrary distinct nodes (barycentric)."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    d = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def _unit_interval_collocation(n_points: int):
    x, w = lgl_points_weights(n_points)
    # map [-1, 1] -> [0, 1]
    return (x + 1.0) / 2.0, w / 2.0


def _smooth_interval_sampler(grid: np.ndarray, channels: int = 1):
    """Random analytic functions sampled on the grid, one draw per call."""

    def sample(rng) -> np.ndarray:
        parts = []
        for _ in range(channels):
            f = np.zeros_like(grid, dtype=complex)
            for _ in range(3):
                amp = rng.standard_normal() + 1j * rng.standard_normal()
                freq = rng.uniform(0.0, 6.0)
                phase = rng.uniform(0.0, 2 * np.pi)
                f += amp * np.sin(freq * grid + phase)
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            rate = rng.uniform(-1.5, 1.5)
            f += amp * np.exp(rate * grid)
            parts.append(f)
        return np.concatenate(parts)

    return sample


def transport_fixture(n_points: int = 64, weighted: bool = False) -> TupleFixture:
    """First-order transport model i d/dx on [0, 1] with endpoint traces.

    The traces are the balanced combinations
    gamma0 f = (f(0) + f(1)) / sqrt(2) and gamma1 f = i (f(1) - f(0)) / sqrt(2),
    which satisfy the integration-by-parts identity exactly at matrix level on
    the LGL grid. ``weighted=True`` rescales the two trace spaces and adjusts
    the pairing accordingly, exercising the non-trivial duality code path.
    """
    grid, w = _unit_interval_collocation(n_points)
    d = 2.0 * differentiation_matrix(2.0 * grid - 1.0)
    astar = 1j * d
    gram_x = GramMatrix(np.diag(w))
    n = n_points
    e0 = np.zeros(n)
    e0[0] = 1.0
    e1 = np.zeros(n)
    e1[-1] = 1.0
    g0 = ((e0 + e1) / np.sqrt(2.0)).reshape(1, -1).astype(complex)
    g1 = (1j * (e1 - e0) / np.sqrt(2.0)).reshape(1, -1)
    if not weighted:
        label = f"transport-{n_points}"
        boundary = BoundaryTupleModel(
            gamma0=g0,
            gamma1=g1,
            gram_minus=GramMatrix.identity(1),
            gram_pivot=GramMatrix.identity(1),
            gram_plus=GramMatrix.identity(1),
            pairing=np.eye(1, dtype=complex),
        )
        transform = TupleTransform.from_v(np.eye(1), boundary)
    else:
        # Rescale: minus trace shrunk by 2, plus trace stretched by 3. The
        # pairing compensates so the boundary form is unchanged.
        label = f"transport-{n_points}-weighted"
        boundary = BoundaryTupleModel(
            gamma0=g0 / 2.0,
            gamma1=3.0 * g1,
            gram_minus=GramMatrix(np.array([[4.0]])),
            gram_pivot=GramMatrix.identity(1),
            gram_plus=GramMatrix(np.array([[1.0 / 9.0]])),
            pairing=np.array([[2.0 / 3.0]], dtype=complex),
        )
        transform = TupleTransform.from_v(np.array([[0.5]]), boundary)
    model = OperatorModel(astar=astar, gram_x=gram_x, label=label)
    return TupleFixture(
        model=model,
        boundary=boundary,
        transform=transform,
        tolerance=1e-8,
        smooth_sampler=_smooth_interval_sampler(grid),
    )


def two_channel_transport_fixture(n_points: int = 48) -> TupleFixture:
    """Two decoupled transport channels with speeds 1 and 2.

    The trace space is two dimensional, so contraction parameters are genuine
    matrices and rank-one versus full-rank perturbations are distinct. Trace
    rows carry sqrt(speed) factors to keep the identity exact per channel.
    """
    grid, w = _unit_interval_collocation(n_points)
    d = 2.0 * differentiation_matrix(2.0 * grid - 1.0)
    speeds = (1.0, 2.0)
    n = n_points
    blocks = [1j * c * d for c in speeds]
    astar = np.block(
        [
            [blocks[0], np.zeros((n, n))],
            [np.zeros((n, n)), blocks[1]],
        ]
    )
    gram_x = GramMatrix(np.diag(np.concatenate([w, w])))
    e0 = np.zeros(n)
    e0[0] = 1.0
    e1 = np.zeros(n)
    e1[-1] = 1.0
    zero = np.zeros(n)
    rows0, rows1 = [], []
    for k, c in enumerate(speeds):
        r0 = np.sqrt(c) * (e0 + e1) / np.sqrt(2.0)
        r1 = 1j * np.sqrt(c) * (e1 - e0) / np.sqrt(2.0)
        pads = [zero, zero]
        pads[k] = r0
        rows0.append(np.concatenate(pads))
        pads = [zero + 0j, zero + 0j]
        pads[k] = r1
        rows1.append(np.concatenate(pads))
    boundary = BoundaryTupleModel(
        gamma0=np.vstack(rows0).astype(complex),
        gamma1=np.vstack(rows1),
        gram_minus=GramMatrix.identity(2),
        gram_pivot=GramMatrix.identity(2),
        gram_plus=GramMatrix.identity(2),
        pairing=np.eye(2, dtype=complex),
    )
    transform = TupleTransform.from_v(np.eye(2), boundary)
    model = OperatorModel(astar=astar, gram_x=gram_x, label=f"transport2-{n_points}")
    return TupleFixture(
        model=model,
        boundary=boundary,
        transform=transform,
        tolerance=1e-8,
        smooth_sampler=_smooth_interval_sampler(grid, channels=2),
    )


_REGISTRY = {
    "transport-64": lambda: transport_fixture(64),
    "transport-32": lambda: transport_fixture(32),
    "transport-64-weighted": lambda: transport_fixture(64, weighted=True),
    "transport2-48": lambda: two_channel_transport_fixture(48),
}


def fixture_registry() -> tuple:
    return tuple(sorted(_REGISTRY))


def get_fixture(name: str) -> TupleFixture:
    try:
        builder = _REGISTRY[name]
    except KeyError:
        known = ", ".join(fixture_registry())
        raise InvalidInputError(f"unknown fixture {name!r} (known: {known})") from None
    return builder()


@dataclass
class GreenCheckResult:
    label: str
    trials: int
    max_defect: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tolerance

    def summary(self) -> str:
        word = "ok" if self.passed else "FAIL"
        return (
            f"green-check {self.label}: max |defect| {self.max_defect:.3e} "
            f"over {self.trials} trials (tol {self.tolerance:.1e}) {word}"
        )


def green_check(fx: TupleFixture, trials: int = 100, seed: int = 20240801,
                tol: float | None = None) -> GreenCheckResult:
    """Sample pairs of states and report the worst integration-by-parts defect.

    Registry fixtures draw random smooth functions on their collocation grid;
    fixtures loaded from JSON fall back to plain random vectors, which is
    exact for any model satisfying the identity at matrix level.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        f = fx.sample_state(rng)
        g = fx.sample_state(rng)
        worst = max(worst, abs(green_defect(fx.model, fx.boundary, f, g)))
    return GreenCheckResult(
        label=fx.label,
        trials=trials,
        max_defect=worst,
        tolerance=fx.tolerance if tol is None else tol,
    )
