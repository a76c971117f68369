"""Boundary multiplier sections on the Sobolev scale of the unit circle.

A scalar impedance coefficient acts on boundary data by pointwise
multiplication. In the weighted Fourier basis that makes the smoothness
scale orthonormal, that action becomes the doubly weighted Toeplitz section

    B_N[m, n] = coeff_hat(m - n) / (w_m w_n),   |m|, |n| <= N,

with w_n = (1 + n^2)^{s/2}. Whether the high-frequency corner of B_N decays
as N grows is a computable stand-in for compactness of the multiplier from
the smoothness-s space into its dual, and the gate below turns that decay
into a three-way verdict. A first-order diagonal symbol is included as the
canonical non-compact control.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError
from .reports import CompactnessReport

# The boundary curve bounds a planar domain; the multiplier criterion's
# integrability exponent depends on this.
AMBIENT_DIM = 2

DEFAULT_SCHEDULE = (16, 32, 64, 128)

# Verdict thresholds, pinned by the golden fixtures in the test suite.
THETA_COMPACT = 1e-2
THETA_NONCOMPACT = 0.5
MONOTONE_SLACK = 1.1
# Largest admissible per-doubling ratio of the tail indicator for a compact
# verdict; the flat non-compact control sits at ratio 1, the slowest compact
# fixture in the calibration set at about 0.85.
RATE_COMPACT = 0.9

# Dyadic grading depth for singular quadrature; the remaining stub near the
# origin is handled by a short power series.
GRADING_LEVELS = 40
GAUSS_NODES = 16


@dataclass(frozen=True)
class SobolevScale:
    """Weight family w_n = (1 + n^2)^{s/2} indexed by integer frequency."""

    s: float

    def __post_init__(self):
        if not (self.s > 0):
            raise InvalidInputError("smoothness index s must be positive")

    def weight(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return (1.0 + n * n) ** (self.s / 2.0)


def _gauss_panels(breaks, subcounts):
    """Gauss-Legendre nodes/weights tiled over subdivided panels."""
    base_x, base_w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    nodes, weights = [], []
    for (lo, hi), m in zip(breaks, subcounts):
        edges = np.linspace(lo, hi, m + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            nodes.append(0.5 * (a + b) + half * base_x)
            weights.append(half * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _power_cosine_moments(exponent: float, n_max: int) -> np.ndarray:
    """Integrals of theta^{-exponent} cos(n theta) over (0, pi] for n = 0..n_max.

    Dyadically graded panels resolve the algebraic singularity; each panel is
    further split so no sub-panel sees more than a few radians of phase. The
    stub below the last level is integrated by the alternating power series
    of the cosine, which converges in two terms at these phase magnitudes.
    """
    breaks = [
        (np.pi * 2.0 ** -(j + 1), np.pi * 2.0 ** -j) for j in range(GRADING_LEVELS)
    ]
    subcounts = [
        max(1, int(np.ceil((hi - lo) * max(n_max, 1) / 3.0))) for lo, hi in breaks
    ]
    nodes, weights = _gauss_panels(breaks, subcounts)
    fvals = weights * nodes ** (-exponent)

    out = np.empty(n_max + 1)
    freqs = np.arange(n_max + 1, dtype=float)
    for start in range(0, n_max + 1, 64):
        block = freqs[start : start + 64]
        out[start : start + 64] = np.cos(np.outer(block, nodes)) @ fvals

    eps = np.pi * 2.0 ** -GRADING_LEVELS
    for k in range(3):
        power = 2 * k + 1 - exponent
        term = (-1.0) ** k * freqs ** (2 * k) / _factorial(2 * k) * eps**power / power
        out += term
    return out


def _factorial(k: int) -> float:
    out = 1.0
    for i in range(2, k + 1):
        out *= i
    return out


@dataclass(frozen=True)
class ImpedanceCoefficient:
    """Scalar boundary coefficient with Fourier and integrability accessors."""

    kind: str
    label: str
    value: complex = 0.0
    func: object = field(default=None, repr=False)
    stored: np.ndarray = field(default=None, repr=False)
    exponent: float = 0.0
    amplitude: complex = 1.0

    @classmethod
    def constant(cls, value) -> "ImpedanceCoefficient":
        return cls(kind="constant", label=f"const({complex(value):g})", value=complex(value))

    @classmethod
    def sampled(cls, func, label: str) -> "ImpedanceCoefficient":
        if not callable(func):
            raise InvalidInputError("sampled coefficient needs a callable")
        return cls(kind="sampled", label=label, func=func)

    @classmethod
    def fourier(cls, centered_coeffs, label: str) -> "ImpedanceCoefficient":
        arr = np.asarray(centered_coeffs, dtype=complex).ravel()
        if arr.size % 2 != 1:
            raise InvalidInputError(
                "centered coefficient array must have odd length (indices -K..K)"
            )
        return cls(kind="fourier", label=label, stored=arr)

    @classmethod
    def power(cls, exponent: float, amplitude=1.0) -> "ImpedanceCoefficient":
        if not (0.0 < exponent < 1.0):
            raise InvalidInputError(
                "power coefficient needs an exponent in (0, 1) to stay integrable"
            )
        return cls(
            kind="power",
            label=f"power(a={exponent:g},c={complex(amplitude):g})",
            exponent=float(exponent),
            amplitude=complex(amplitude),
        )

    # -- Fourier data ------------------------------------------------------

    def fourier_coeffs(self, n_max: int) -> np.ndarray:
        """Centered coefficient array for indices -n_max..n_max."""
        if n_max < 0:
            raise InvalidInputError("n_max must be nonnegative")
        size = 2 * n_max + 1
        if self.kind == "constant":
            out = np.zeros(size, dtype=complex)
            out[n_max] = self.value
            return out
        if self.kind == "fourier":
            out = np.zeros(size, dtype=complex)
            half = (self.stored.size - 1) // 2
            keep = min(half, n_max)
            out[n_max - keep : n_max + keep + 1] = self.stored[
                half - keep : half + keep + 1
            ]
            return out
        if self.kind == "sampled":
            m = max(1024, 8 * (n_max + 1))
            theta = -np.pi + 2.0 * np.pi * np.arange(m) / m
            vals = np.asarray(self.func(theta), dtype=complex)
            if vals.shape != theta.shape:
                raise InvalidInputError("sampled coefficient must map grids to grids")
            out = np.empty(size, dtype=complex)
            freqs = np.arange(-n_max, n_max + 1)
            for start in range(0, size, 64):
                block = freqs[start : start + 64]
                out[start : start + 64] = (
                    np.exp(-1j * np.outer(block, theta)) @ vals
                ) / m
            return out
        if self.kind == "power":
            moments = _power_cosine_moments(self.exponent, n_max)
            half_coeffs = (self.amplitude / np.pi) * moments
            out = np.empty(size, dtype=complex)
            out[n_max:] = half_coeffs
            out[:n_max] = half_coeffs[1:][::-1]
            return out
        raise InvalidInputError(f"unknown coefficient kind {self.kind!r}")

    # -- Integrability -----------------------------------------------------

    def lq_norm(self, q: float) -> float:
        """Norm in the q-integrable class w.r.t. normalized arc measure."""
        if q < 1:
            raise InvalidInputError("integrability exponent q must be >= 1")
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "power":
            aq = self.exponent * q
            if aq >= 1.0:
                return float("inf")
            return float(abs(self.amplitude) * (np.pi**-aq / (1.0 - aq)) ** (1.0 / q))
        theta = -np.pi + 2.0 * np.pi * np.arange(8192) / 8192
        vals = np.abs(np.asarray(self._evaluate(theta), dtype=complex))
        return float(np.mean(vals**q) ** (1.0 / q))

    def _evaluate(self, theta):
        if self.kind == "sampled":
            return self.func(theta)
        if self.kind == "fourier":
            half = (self.stored.size - 1) // 2
            freqs = np.arange(-half, half + 1)
            return np.exp(1j * np.outer(theta, freqs)) @ self.stored
        if self.kind == "constant":
            return np.full_like(theta, self.value, dtype=complex)
        raise InvalidInputError("pointwise evaluation undefined for this kind")


# ---------------------------------------------------------------------------
# Sections


def multiplier_section(
    coef: ImpedanceCoefficient, scale: SobolevScale, n_cut: int, coeffs=None
) -> np.ndarray:
    """Weighted Toeplitz section of the multiplication action, size 2N+1."""
    if n_cut < 1:
        raise InvalidInputError("section cutoff must be at least 1")
    if coeffs is None:
        coeffs = coef.fourier_coeffs(2 * n_cut)
    coeffs = np.asarray(coeffs, dtype=complex)
    center = (coeffs.size - 1) // 2
    if center < 2 * n_cut:
        raise InvalidInputError("coefficient array too short for this section")
    idx = np.arange(-n_cut, n_cut + 1)
    w = scale.weight(idx)
    toeplitz = coeffs[np.subtract.outer(idx, idx) + center]
    return toeplitz / np.outer(w, w)


def first_order_symbol_section(scale: SobolevScale, n_cut: int) -> np.ndarray:
    """Diagonal section of i (1 + n^2)^{1/2} seen through the scale weights.

    This models a boundary operator of derivative order one; its weighted
    entries are i (1 + n^2)^{1/2 - s}, which never decay for s <= 1/2. It is
    the control the gate must classify as non-compact.
    """
    if n_cut < 1:
        raise InvalidInputError("section cutoff must be at least 1")
    idx = np.arange(-n_cut, n_cut + 1, dtype=float)
    entries = 1j * (1.0 + idx * idx) ** (0.5 - scale.s)
    return np.diag(entries)


# ---------------------------------------------------------------------------
# Compactness gate


def _corner_block(section: np.ndarray, n_cut: int) -> np.ndarray:
    idx = np.arange(-n_cut, n_cut + 1)
    mask = np.abs(idx) > n_cut // 2
    return section[np.ix_(mask, mask)]


def compactness_gate(
    target,
    s: float = 0.5,
    schedule=DEFAULT_SCHEDULE,
    label: str = None,
) -> CompactnessReport:
    """Classify a boundary action as compact, non-compact, or inconclusive.

    target is either an ImpedanceCoefficient (its multiplier sections are
    built internally) or a callable N -> section matrix. The indicator at
    each cutoff is the spectral norm of the high-frequency corner relative
    to the full section; a decaying indicator certifies the finite sections
    are norm-approximated by low-frequency blocks, the numerical shadow of
    compactness.
    """
    scale = SobolevScale(s)
    schedule = tuple(int(n) for n in schedule)
    if len(schedule) < 2 or any(
        b <= a for a, b in zip(schedule[:-1], schedule[1:])
    ):
        raise InvalidInputError("schedule must be strictly increasing, length >= 2")

    if isinstance(target, ImpedanceCoefficient):
        coeffs = target.fourier_coeffs(2 * schedule[-1])
        center = (coeffs.size - 1) // 2

        def provider(n_cut: int) -> np.ndarray:
            window = coeffs[center - 2 * n_cut : center + 2 * n_cut + 1]
            return multiplier_section(target, scale, n_cut, coeffs=window)

        label = label or target.label
    elif callable(target):
        provider = target
        label = label or getattr(target, "__name__", "custom-section")
    else:
        raise InvalidInputError("gate target must be a coefficient or a provider")

    indicators, norms, corner_sigmas = [], [], {}
    last_section = None
    for n_cut in schedule:
        section = np.asarray(provider(n_cut), dtype=complex)
        expected = 2 * n_cut + 1
        if section.shape != (expected, expected):
            raise InvalidInputError(
                f"provider returned shape {section.shape} at cutoff {n_cut}, "
                f"expected ({expected}, {expected})"
            )
        corner = _corner_block(section, n_cut)
        sig = sla.svdvals(corner)
        full = sla.svdvals(section)[0] if section.size else 0.0
        norms.append(float(full))
        indicators.append(float(sig[0] / full) if full > 0 else 0.0)
        corner_sigmas[n_cut] = sig[:16].astype(float)
        last_section = section

    t = indicators
    monotone = all(b <= MONOTONE_SLACK * a + 1e-15 for a, b in zip(t[:-1], t[1:]))
    doublings = max(len(t) - 1, 1)
    rate = (t[-1] / t[0]) ** (1.0 / doublings) if t[0] > 0 else 0.0
    if monotone and (
        t[-1] < THETA_COMPACT or (rate <= RATE_COMPACT and t[-1] < THETA_NONCOMPACT)
    ):
        verdict = "compact"
    elif min(t) >= THETA_NONCOMPACT:
        verdict = "noncompact"
    else:
        verdict = "inconclusive"

    herm = (last_section + last_section.conj().T) / 2.0
    re_defect = float(sla.eigvalsh(herm)[0])

    return CompactnessReport(
        label=label,
        s=s,
        schedule=schedule,
        indicators=indicators,
        section_norms=norms,
        corner_sigmas=corner_sigmas,
        verdict=verdict,
        re_defect=re_defect,
        thresholds={
            "theta_compact": THETA_COMPACT,
            "theta_noncompact": THETA_NONCOMPACT,
            "monotone_slack": MONOTONE_SLACK,
            "rate_compact": RATE_COMPACT,
        },
    )


def lq_report(coef: ImpedanceCoefficient, s: float = 0.5, q: float = 2.0) -> dict:
    """Integrability-based sufficient condition for a compact multiplier.

    The hypothesis asks the coefficient to be q-integrable with q above
    max((d-1)/(2s), 1) for a d-dimensional interior; on the circle d = 2.
    """
    scale = SobolevScale(s)  # validates s
    if q < 1:
        raise InvalidInputError("integrability exponent q must be >= 1")
    requirement = max((AMBIENT_DIM - 1) / (2.0 * scale.s), 1.0)
    norm = coef.lq_norm(q)
    finite = bool(np.isfinite(norm))
    applies = bool(finite and q > requirement)
    return {
        "label": coef.label,
        "s": s,
        "q": q,
        "ambient_dim": AMBIENT_DIM,
        "exponent_requirement": requirement,
        "lq_norm": norm if finite else "inf",
        "finite": finite,
        "theorem_applies": applies,
        "predicts_compact": applies,
    }
