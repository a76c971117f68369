"""Closed-form and semi-analytic acoustic eigenvalue models.

Two concrete resonators anchor the matrix experiments to continuum
predictions: a unit string with one damped end, whose eigenvalues come from
a single complex logarithm, and the unit disk with an impedance rim, whose
eigenvalues are roots of a combination of a cylinder function and its
derivative. The cylinder function is evaluated in-house (ascending series
near the origin, backward recurrence elsewhere) so the root finder does not
lean on the libraries it is being checked against; library routines appear
only in the test suite as oracles.
"""

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError
from .reports import ModeEntry, SpectrumReport

# Beyond this modulus the backward recurrence start order grows past what a
# desk-scale run needs; inputs are rejected instead of silently degrading.
BESSEL_ARG_CAP = 200.0
SERIES_RADIUS = 12.0
MAX_BESSEL_ORDER = 60

CRITICAL_MATCH_TOL = 1e-13


# ---------------------------------------------------------------------------
# Damped string


@dataclass(frozen=True)
class StringSpec:
    """Unit string, fixed left end, impedance load zeta at the right end."""

    zeta: complex
    allow_nonaccretive: bool = False

    def __post_init__(self):
        z = complex(self.zeta)
        if not (np.isfinite(z.real) and np.isfinite(z.imag)):
            raise InvalidInputError("string impedance must be finite")
        if z.real < 0 and not self.allow_nonaccretive:
            raise InvalidInputError(
                "string impedance has negative real part; pass "
                "allow_nonaccretive=True to study it anyway"
            )

    @property
    def critically_damped(self) -> bool:
        return abs(complex(self.zeta) - 1.0) < CRITICAL_MATCH_TOL


def string_characteristic(spec: StringSpec, lam) -> np.ndarray:
    """i zeta sin(lam) - cos(lam); its zeros are the string eigenvalues."""
    lam = np.asarray(lam, dtype=complex)
    return 1j * complex(spec.zeta) * np.sin(lam) - np.cos(lam)


def string_spectrum(spec: StringSpec, count: int = 10) -> SpectrumReport:
    """First eigenvalues with positive real part, by the exact formula.

    The characteristic equation collapses to exp(2 i lam) = (zeta+1)/(zeta-1),
    so eigenvalues form a single arithmetic ladder with step pi. At zeta = 1
    the right side degenerates and the spectrum is empty (every mode leaves
    through the boundary in finite time); the report records that as
    critical damping instead of inventing modes.
    """
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    zeta = complex(spec.zeta)
    meta = {
        "model": "string",
        "zeta": [zeta.real, zeta.imag],
        "count": count,
        "critically_damped": spec.critically_damped,
    }
    if spec.critically_damped:
        return SpectrumReport("string", [], metadata=meta)

    base = cmath.log((zeta + 1.0) / (zeta - 1.0)) / 2j
    # shift the ladder so reported modes start just above Re = 0
    start = int(np.ceil((1e-12 - base.real) / np.pi))
    entries = []
    for k in range(start, start + count):
        lam = base + k * np.pi
        lam = _newton_polish_string(spec, lam)
        residual = abs(string_characteristic(spec, lam))
        scale = max(abs(np.exp(complex(0, 1) * lam)), abs(np.exp(complex(0, -1) * lam)))
        entries.append(
            ModeEntry(
                re_lambda=float(lam.real),
                im_lambda=float(lam.imag),
                residual=float(residual / max(scale, 1.0)),
                mode_tag="string",
            )
        )
    return SpectrumReport("string", entries, metadata=meta)


def _newton_polish_string(spec: StringSpec, lam: complex) -> complex:
    zeta = complex(spec.zeta)
    for _ in range(8):
        f = 1j * zeta * cmath.sin(lam) - cmath.cos(lam)
        df = 1j * zeta * cmath.cos(lam) + cmath.sin(lam)
        if abs(df) == 0:
            break
        step = f / df
        lam = lam - step
        if abs(step) < 1e-15 * max(abs(lam), 1.0):
            break
    return lam


# ---------------------------------------------------------------------------
# Cylinder functions


def _bessel_table_series(m_max: int, z: np.ndarray) -> np.ndarray:
    """Ascending series for all orders 0..m_max, valid for small |z|."""
    out = np.zeros((m_max + 1, z.size), dtype=complex)
    half = z / 2.0
    for m in range(m_max + 1):
        # term_k = (-1)^k (z/2)^{2k+m} / (k! (k+m)!)
        term = half**m / _factorial(m)
        acc = term.copy()
        for k in range(1, 60):
            term = term * (-(half * half)) / (k * (k + m))
            acc += term
        out[m] = acc
    return out


def _factorial(k: int) -> float:
    out = 1.0
    for i in range(2, k + 1):
        out *= i
    return out


def _bessel_table_miller(m_max: int, z: np.ndarray) -> np.ndarray:
    """Backward recurrence with a cancellation-safe normalization.

    Runs the three-term recurrence downward from an order well above both
    m_max and |z|, then rescales against one of two even-order sum rules:
    J_0 + 2 J_2 + 2 J_4 + ... = 1 away from the real axis is a sum of
    e^{|Im z|}-sized terms collapsing to 1, so off-axis points instead use
    J_0 - 2 J_2 + 2 J_4 - ... = cos z, whose value is as large as its
    terms. Rescaling guards keep the unnormalized sweep in double range.
    """
    amax = float(np.abs(z).max())
    start = int(amax + 12 + 9 * amax ** (1.0 / 3.0))
    start = max(start, m_max + 12)
    if start % 2 == 1:
        start += 1

    jp = np.zeros(z.size, dtype=complex)
    jc = np.full(z.size, 1e-200, dtype=complex)
    rows = np.zeros((m_max + 1, z.size), dtype=complex)
    norm_one = np.zeros(z.size, dtype=complex)
    norm_cos = np.zeros(z.size, dtype=complex)
    for k in range(start, 0, -1):
        jm = (2.0 * k) * jc / z - jp
        jp = jc
        jc = jm
        order = k - 1
        if order <= m_max:
            rows[order] = jc
        if order % 2 == 0:
            half_parity = (order // 2) % 2
            term = jc if order == 0 else 2.0 * jc
            norm_one += term
            norm_cos += -term if half_parity else term
        peak = np.abs(jc).max()
        if peak > 1e250:
            jc *= 1e-250
            jp *= 1e-250
            norm_one *= 1e-250
            norm_cos *= 1e-250
            rows *= 1e-250
    off_axis = np.abs(z.imag) > 1.0
    scaled_cos = np.where(off_axis, np.cos(z), 1.0)
    norm = np.where(off_axis, norm_cos / scaled_cos, norm_one)
    if (np.abs(norm) < 1e-280).any():
        raise NumericalFailureError("cylinder recurrence normalization collapsed")
    return rows / norm


def _bessel_table(m_max: int, z: np.ndarray) -> np.ndarray:
    """J_m(z) for m = 0..m_max over a flat complex array."""
    if m_max < 0 or m_max > MAX_BESSEL_ORDER:
        raise InvalidInputError(f"order must lie in 0..{MAX_BESSEL_ORDER}")
    z = np.asarray(z, dtype=complex).ravel()
    if z.size and np.abs(z).max() > BESSEL_ARG_CAP:
        raise InvalidInputError(
            f"cylinder function argument exceeds the workbench cap {BESSEL_ARG_CAP:g}"
        )
    out = np.zeros((m_max + 1, z.size), dtype=complex)
    small = np.abs(z) <= SERIES_RADIUS
    if small.any():
        out[:, small] = _bessel_table_series(m_max, z[small])
    large = ~small
    if large.any():
        out[:, large] = _bessel_table_miller(m_max, z[large])
    return out


def bessel_j(order: int, z, derivative: bool = False):
    """First-kind cylinder function of integer order (or its derivative)."""
    order = int(order)
    sign = 1.0
    if order < 0:
        sign = (-1.0) ** (-order)
        order = -order
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    flat = z.ravel()
    table = _bessel_table(order + 1, flat)
    if derivative:
        if order == 0:
            vals = -table[1]
        else:
            lower = table[order - 1]
            vals = (lower - table[order + 1]) / 2.0
    else:
        vals = table[order]
    # reflection J_{-m} = (-1)^m J_m carries the same sign to the derivative
    vals = sign * vals
    out = vals.reshape(z.shape)
    return complex(out[()]) if scalar else out


# ---------------------------------------------------------------------------
# Disk with impedance rim


@dataclass(frozen=True)
class DiskModeProblem:
    """Angular sector m of the unit disk with rim impedance zeta.

    Eigenvalues solve i zeta J_m(lam) - J_m'(lam) = 0; the zeta = 0 case
    reduces to the classical rigid-rim condition J_m'(lam) = 0.
    """

    m: int
    zeta: complex

    def __post_init__(self):
        if self.m < 0 or self.m > 20:
            raise InvalidInputError("angular order must lie in 0..20")

    def char(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex).ravel()
        table = _bessel_table(self.m + 2, lam)
        jm = table[self.m]
        jp = self._deriv(table, lam)
        return 1j * complex(self.zeta) * jm - jp

    def char_and_deriv(self, lam):
        lam = np.asarray(lam, dtype=complex).ravel()
        table = _bessel_table(self.m + 2, lam)
        m = self.m
        jm = table[m]
        lower = table[m - 1] if m >= 1 else -table[1]
        jp = (lower - table[m + 1]) / 2.0
        if m >= 2:
            lower2 = table[m - 2]
        elif m == 1:
            lower2 = -table[1]  # J_{-1} = -J_1
        else:
            lower2 = table[2]  # J_{-2} = J_2
        jpp = (lower2 - 2.0 * jm + table[m + 2]) / 4.0
        zeta = complex(self.zeta)
        return 1j * zeta * jm - jp, 1j * zeta * jp - jpp

    def _deriv(self, table, lam) -> np.ndarray:
        m = self.m
        lower = table[m - 1] if m >= 1 else -table[1]
        return (lower - table[m + 1]) / 2.0


@dataclass(frozen=True)
class SearchBox:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise InvalidInputError("search box must have positive extent")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.re_max - self.re_min, self.im_max - self.im_min))

    def contains(self, lam: complex, slack: float = 0.0) -> bool:
        return (
            self.re_min - slack <= lam.real <= self.re_max + slack
            and self.im_min - slack <= lam.imag <= self.im_max + slack
        )

    def split(self):
        if (self.re_max - self.re_min) >= (self.im_max - self.im_min):
            mid = 0.5 * (self.re_min + self.re_max)
            return (
                SearchBox(self.re_min, mid, self.im_min, self.im_max),
                SearchBox(mid, self.re_max, self.im_min, self.im_max),
            )
        mid = 0.5 * (self.im_min + self.im_max)
        return (
            SearchBox(self.re_min, self.re_max, self.im_min, mid),
            SearchBox(self.re_min, self.re_max, mid, self.im_max),
        )

    def perturbed(self, rng, amount: float) -> "SearchBox":
        d = amount * (1.0 + rng.random(4))
        return SearchBox(
            self.re_min - d[0], self.re_max + d[1], self.im_min - d[2], self.im_max + d[3]
        )


class _BoundaryTooClose(Exception):
    """A characteristic zero sits (numerically) on the contour."""


def _boundary_samples(box: SearchBox, n: int) -> np.ndarray:
    """Counterclockwise closed contour along the box edges."""
    per = max(n // 4, 16)
    bottom = np.linspace(box.re_min, box.re_max, per, endpoint=False)
    east = np.linspace(box.im_min, box.im_max, per, endpoint=False)
    topside = np.linspace(box.re_max, box.re_min, per, endpoint=False)
    west = np.linspace(box.im_max, box.im_min, per, endpoint=False)
    return np.concatenate(
        [
            bottom + 1j * box.im_min,
            box.re_max + 1j * east,
            topside + 1j * box.im_max,
            box.re_min + 1j * west,
        ]
    )


def _winding_number(problem: DiskModeProblem, box: SearchBox, samples: int) -> int:
    # A zero on (or numerically on) the contour shows up as a phase jump that
    # survives refinement, or as an outright underflow. A merely tiny |h| is
    # normal: near the origin the characteristic of sector m is analytically
    # smaller than its contour max by ~(re_min)^m, and the phase stays smooth.
    for n in (samples, 2 * samples, 4 * samples):
        pts = _boundary_samples(box, n)
        vals = problem.char(pts)
        mags = np.abs(vals)
        if not np.all(np.isfinite(vals)) or mags.min() <= 1e-300:
            raise _BoundaryTooClose
        closed = np.append(vals, vals[0])
        turns = np.angle(closed[1:] / closed[:-1])
        if np.abs(turns).max() > 2.5:  # contour undersampled near a zero
            continue
        total = turns.sum() / (2.0 * np.pi)
        if abs(total - round(total)) < 0.05:
            return int(round(total))
    raise _BoundaryTooClose


def _newton_root(problem: DiskModeProblem, start: complex, box: SearchBox):
    lam = complex(start)
    for _ in range(60):
        f, df = problem.char_and_deriv(np.array([lam]))
        f, df = f[0], df[0]
        if abs(df) == 0.0:
            return None
        step = f / df
        lam = lam - step
        if not box.contains(lam, slack=2.0 * box.diameter + 0.5):
            return None
        if abs(step) < 1e-13 * max(abs(lam), 1.0):
            break
    resid = abs(problem.char(np.array([lam]))[0])
    # the contour count attributed this zero to `box`; a polished point far
    # outside (e.g. the trivial origin zero of higher sectors) is a miss
    if resid <= 1e-10 and box.contains(lam, slack=1e-6):
        return lam, resid
    return None


def disk_mode_roots(
    m: int,
    zeta,
    box: SearchBox = None,
    samples: int = 2048,
    seed: int = 20240801,
) -> dict:
    """All characteristic roots of one angular sector inside a search box.

    Counts zeros by the phase winding of the characteristic function along
    the box boundary, bisects until each sub-box holds one, and polishes
    with Newton steps. When a zero sits on a contour the box is nudged
    outward a few times before giving up. Returns roots, the contour count,
    and per-root residuals.
    """
    problem = DiskModeProblem(m=int(m), zeta=complex(zeta))
    if box is None:
        box = SearchBox(0.05, 20.0, -5.0, 0.05)
    rng = np.random.default_rng(seed)

    outer = box
    for attempt in range(6):
        try:
            expected = _winding_number(problem, outer, samples)
            break
        except _BoundaryTooClose:
            if attempt == 5:
                raise NumericalFailureError(
                    "could not move the search contour off a characteristic zero"
                )
            outer = box.perturbed(rng, 1e-4 * (attempt + 1))
    roots, residuals = [], []
    stack = [(outer, expected)]
    while stack:
        current, count = stack.pop()
        if count == 0:
            continue
        if count == 1 or current.diameter < 2e-2:
            got = _newton_root(problem, current.center, current)
            if got is None:
                # fall back on a few shifted starts before splitting further
                for shift in (0.3 + 0.2j, -0.25 + 0.1j, 0.1 - 0.3j):
                    got = _newton_root(
                        problem, current.center + shift * current.diameter, current
                    )
                    if got is not None:
                        break
            if got is not None and count == 1:
                roots.append(got[0])
                residuals.append(got[1])
                continue
            if got is not None and current.diameter < 2e-2:
                # a tight cluster the contour says holds several zeros
                roots.extend([got[0]] * count)
                residuals.extend([got[1]] * count)
                continue
            if current.diameter < 1e-6:
                raise NumericalFailureError(
                    f"failed to converge on a root near {current.center:g}"
                )
        pieces = current.split()
        for piece in pieces:
            sub = piece
            for attempt in range(6):
                try:
                    c = _winding_number(problem, sub, max(samples // 2, 512))
                    stack.append((sub, c))
                    break
                except _BoundaryTooClose:
                    if attempt == 5:
                        raise NumericalFailureError(
                            "bisection could not isolate the characteristic zeros"
                        )
                    sub = piece.perturbed(rng, 1e-4 * (attempt + 1))

    # merge duplicates found through overlapping perturbed sub-boxes
    merged, merged_res = [], []
    for lam, res in sorted(zip(roots, residuals), key=lambda t: (t[0].real, t[0].imag)):
        if merged and abs(lam - merged[-1]) < 1e-6:
            merged_res[-1] = min(merged_res[-1], res)
            continue
        merged.append(lam)
        merged_res.append(res)

    return {
        "m": int(m),
        "zeta": complex(zeta),
        "roots": np.array(merged, dtype=complex),
        "residuals": np.array(merged_res, dtype=float),
        "expected_count": int(expected),
        "count_matches": len(merged) == int(expected),
    }


def disk_spectrum(
    zeta,
    m_max: int = 8,
    box: SearchBox = None,
    samples: int = 2048,
) -> SpectrumReport:
    """Impedance-rim disk eigenvalues across angular orders 0..m_max.

    Angular order zero contributes simple eigenvalues; every higher order
    carries the two rotation directions and is reported with multiplicity 2.
    """
    if m_max < 0 or m_max > 20:
        raise InvalidInputError("m_max must lie in 0..20")
    entries = []
    counts = {}
    matches = {}
    for m in range(m_max + 1):
        result = disk_mode_roots(m, zeta, box=box, samples=samples)
        counts[str(m)] = int(result["roots"].size)
        matches[str(m)] = bool(result["count_matches"])
        for lam, res in zip(result["roots"], result["residuals"]):
            entries.append(
                ModeEntry(
                    re_lambda=float(lam.real),
                    im_lambda=float(lam.imag),
                    residual=float(res),
                    mode_tag=f"disk-m{m}",
                    multiplicity=1 if m == 0 else 2,
                )
            )
    zeta = complex(zeta)
    meta = {
        "model": "disk",
        "zeta": [zeta.real, zeta.imag],
        "m_max": m_max,
        "roots_per_order": counts,
        "count_matches": matches,
        "all_counts_match": bool(all(matches.values())),
    }
    return SpectrumReport("disk", entries, metadata=meta)
