"""Finite models of boundary value problems in trace form.

A model couples a state-space operator (the maximal operator of the problem,
called ``astar`` throughout) with two trace maps gamma0, gamma1 into a pair of
mutually dual trace spaces. The duality is carried explicitly by a pairing
matrix, so rigged (weighted) trace spaces and the plain Hilbert-space case are
handled by one code path.

Conventions, used consistently everywhere:

- inner products are linear in the first slot: (u|v) = v^H G u;
- the pairing of the plus trace space with the minus trace space is
  pair(x, y) = y^H P x, where x holds plus coordinates and y minus
  coordinates; the reverse pairing is its complex conjugate;
- the defect of the integration-by-parts identity for a model is

    green_defect(f, g) = (A f|g) - (f|A g) - pair(g1 f, g0 g) + conj(pair(g1 g, g0 f))

  which vanishes (to model tolerance) when the tuple is consistent.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalFailureError
from .linalg import GramMatrix, as_complex_matrix, numerical_rank

__all__ = [
    "OperatorModel",
    "BoundaryTupleModel",
    "TupleTransform",
    "TupleFixture",
    "green_defect",
    "to_boundary_triple",
    "natural_adjoint",
    "accretivity_defect",
    "fixture_to_json",
    "fixture_from_json",
]


@dataclass
class OperatorModel:
    """Matrix model of the maximal operator on the state space."""

    astar: np.ndarray
    gram_x: GramMatrix
    label: str = ""

    def __post_init__(self):
        self.astar = as_complex_matrix(self.astar, "astar")
        n, m = self.astar.shape
        if n != m:
            raise InvalidInputError(f"astar must be square, got {n}x{m}")
        if n != self.gram_x.dim:
            raise InvalidInputError("astar and gram_x dimensions disagree")

    @property
    def dim(self) -> int:
        return self.astar.shape[0]


@dataclass
class BoundaryTupleModel:
    """Trace maps and the metric data of the two trace spaces.

    gamma0 maps into the minus space (p coordinates), gamma1 into the plus
    space (q coordinates). ``pairing`` is the p x q matrix of the duality
    between them; it must be square and invertible for the duality to be
    non-degenerate, which every operation here relies on.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    gram_minus: GramMatrix
    gram_pivot: GramMatrix
    gram_plus: GramMatrix
    pairing: np.ndarray

    def __post_init__(self):
        self.gamma0 = as_complex_matrix(self.gamma0, "gamma0")
        self.gamma1 = as_complex_matrix(self.gamma1, "gamma1")
        self.pairing = as_complex_matrix(self.pairing, "pairing")
        p, q = self.pairing.shape
        if self.gamma0.shape[0] != p:
            raise InvalidInputError("gamma0 row count must match pairing rows (minus space)")
        if self.gamma1.shape[0] != q:
            raise InvalidInputError("gamma1 row count must match pairing columns (plus space)")
        if self.gamma0.shape[1] != self.gamma1.shape[1]:
            raise InvalidInputError("trace maps must share the state dimension")
        if p != q:
            raise InvalidInputError("pairing must be square for a non-degenerate duality")
        if self.gram_minus.dim != p or self.gram_plus.dim != q:
            raise InvalidInputError("trace gram dimensions disagree with trace maps")
        s = sla.svdvals(self.pairing)
        if s[-1] <= 1e-12 * s[0]:
            raise InvalidInputError("pairing matrix is numerically singular")

    @property
    def state_dim(self) -> int:
        return self.gamma0.shape[1]

    @property
    def trace_dim(self) -> int:
        return self.pairing.shape[0]

    def pair_plus_minus(self, x_plus, y_minus) -> complex:
        """pair(x, y) = y^H P x for x in plus coordinates, y in minus coordinates."""
        x = np.asarray(x_plus, dtype=complex).reshape(-1)
        y = np.asarray(y_minus, dtype=complex).reshape(-1)
        return complex(y.conj() @ (self.pairing @ x))

    def stacked_trace_rank(self, tol: float = 1e-10) -> int:
        """Numerical row rank of [gamma0; gamma1].

        Full row rank (= 2 * trace_dim) is the desk-scale stand-in for
        surjectivity of the combined trace map; it is a necessary condition
        only, and the only one a finite section can certify.
        """
        stacked = np.vstack([self.gamma0, self.gamma1])
        return numerical_rank(stacked, tol)


@dataclass
class TupleTransform:
    """Invertible map v from the pivot space onto the minus trace space.

    ``v_natural`` is the pairing-adjoint of v, pinned by the identity
    pair_reverse(v f, g) = (f | v_natural g)_pivot. The constructor verifies
    that identity; ``from_v`` computes v_natural from it directly.
    """

    v: np.ndarray
    v_natural: np.ndarray

    def __post_init__(self):
        self.v = as_complex_matrix(self.v, "v")
        self.v_natural = as_complex_matrix(self.v_natural, "v_natural")
        if self.v.shape[0] != self.v.shape[1]:
            raise InvalidInputError("v must be square (pivot and minus space dimensions agree)")
        s = sla.svdvals(self.v)
        if s[-1] <= 1e-12 * s[0]:
            raise InvalidInputError("v must be invertible")

    @classmethod
    def from_v(cls, v, tup: BoundaryTupleModel) -> "TupleTransform":
        v = as_complex_matrix(v, "v")
        g_h = tup.gram_pivot
        v_nat = g_h.solve(v.conj().T @ tup.pairing)
        return cls(v=v, v_natural=v_nat)

    def verify(self, tup: BoundaryTupleModel, tol: float = 1e-10) -> float:
        """Residual of the defining identity, must be <= tol * scale."""
        lhs = self.pairing_residual(tup)
        scale = 1.0 + float(np.linalg.norm(self.v))
        if lhs > tol * scale:
            raise NumericalFailureError(
                f"transform pairing identity residual {lhs:.3e} exceeds {tol:.1e}"
            )
        return lhs

    def pairing_residual(self, tup: BoundaryTupleModel) -> float:
        # pair(v f, g) = (f | v_nat g): P^H v == v_nat^H G_pivot as matrices.
        lhs = tup.pairing.conj().T @ self.v
        rhs = self.v_natural.conj().T @ tup.gram_pivot.matrix
        return float(np.linalg.norm(lhs - rhs))


@dataclass
class TupleFixture:
    """A shipped, self-validating model: operator + tuple + transform."""

    model: OperatorModel
    boundary: BoundaryTupleModel
    transform: TupleTransform
    tolerance: float = 1e-8
    # Grid-aware sampler of smooth state vectors; None for file-loaded
    # fixtures, where plain random vectors are used instead.
    smooth_sampler: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.boundary.state_dim != self.model.dim:
            raise InvalidInputError("trace maps do not match the state dimension")
        if self.tolerance <= 0:
            raise InvalidInputError("fixture tolerance must be positive")

    @property
    def label(self) -> str:
        return self.model.label

    def sample_state(self, rng) -> np.ndarray:
        if self.smooth_sampler is not None:
            return self.smooth_sampler(rng)
        n = self.model.dim
        return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def green_defect(model: OperatorModel, tup: BoundaryTupleModel, f, g) -> complex:
    """Defect of the integration-by-parts identity at the pair (f, g)."""
    f = np.asarray(f, dtype=complex).reshape(-1)
    g = np.asarray(g, dtype=complex).reshape(-1)
    n = model.dim
    if f.shape[0] != n or g.shape[0] != n:
        raise InvalidInputError(f"state vectors must have length {n}")
    if not (np.all(np.isfinite(f.view(float))) and np.all(np.isfinite(g.view(float)))):
        raise InvalidInputError("state vectors must be finite")
    af, ag = model.astar @ f, model.astar @ g
    gx = model.gram_x
    lhs = gx.inner(af, g) - gx.inner(f, ag)
    t0f, t1f = tup.gamma0 @ f, tup.gamma1 @ f
    t0g, t1g = tup.gamma0 @ g, tup.gamma1 @ g
    rhs = tup.pair_plus_minus(t1f, t0g) - np.conj(tup.pair_plus_minus(t1g, t0f))
    return complex(lhs - rhs)


def to_boundary_triple(tup: BoundaryTupleModel, t: TupleTransform):
    """Flatten a tuple with explicit duality to a triple over the pivot space.

    Returns (triple, dual_triple). The triple has traces v^{-1} gamma0 and
    v_natural gamma1; every metric on it is the pivot gram, and the pairing
    equals the pivot inner product. The dual triple swaps the roles of the
    traces with factors of i, so that its first trace is i * gamma1_v and its
    second is -i * gamma0_v. Applying the construction to the dual recovers
    the original triple exactly.
    """
    t.verify(tup)
    g_h = tup.gram_pivot
    if t.v.shape[0] != tup.trace_dim or t.v.shape[1] != g_h.dim:
        raise InvalidInputError("transform dimensions do not match the tuple")
    gamma0_v = np.linalg.solve(t.v, tup.gamma0)
    gamma1_v = t.v_natural @ tup.gamma1
    triple = BoundaryTupleModel(
        gamma0=gamma0_v,
        gamma1=gamma1_v,
        gram_minus=g_h,
        gram_pivot=g_h,
        gram_plus=g_h,
        pairing=g_h.matrix.copy(),
    )
    dual = BoundaryTupleModel(
        gamma0=1j * gamma1_v,
        gamma1=-1j * gamma0_v,
        gram_minus=g_h,
        gram_pivot=g_h,
        gram_plus=g_h,
        pairing=g_h.matrix.copy(),
    )
    return triple, dual


def natural_adjoint(z, tup: BoundaryTupleModel) -> np.ndarray:
    """Pairing-adjoint of an operator from the minus to the plus trace space.

    Defined by pair(z f, g) = conj(pair(z_nat g, f)) for all trace vectors
    f, g; in matrix form z_nat = P^{-1} z^H P^H. Under the trivial duality
    (P = I) this is the conjugate transpose. The defining identity and the
    involution property are re-verified numerically before returning.
    """
    z = _as_trace_operator(z, tup)
    p = tup.pairing
    z_nat = np.linalg.solve(p, z.conj().T @ p.conj().T)
    scale = 1.0 + float(np.linalg.norm(z))
    ident = np.linalg.norm(p @ z - z_nat.conj().T @ p.conj().T)
    if ident > 1e-10 * scale:
        raise NumericalFailureError(f"natural adjoint identity residual {ident:.3e}")
    again = np.linalg.solve(p, z_nat.conj().T @ p.conj().T)
    if np.linalg.norm(again - z) > 1e-12 * scale * np.linalg.cond(p):
        raise NumericalFailureError("natural adjoint involution drift")
    return z_nat


def accretivity_defect(z, tup: BoundaryTupleModel) -> float:
    """Smallest value of Re pair(z y, y) over unit-norm minus-space vectors y.

    The minimum of the pairing-weighted Hermitian part of z relative to the
    minus-space gram; >= 0 means z is accretive in this duality.
    """
    z = _as_trace_operator(z, tup)
    pz = tup.pairing @ z
    herm = 0.5 * (pz + pz.conj().T)
    vals = sla.eigh(herm, tup.gram_minus.matrix, eigvals_only=True)
    return float(vals[0])


def _as_trace_operator(z, tup: BoundaryTupleModel) -> np.ndarray:
    """Accept a scalar or a q x p matrix acting minus -> plus."""
    if np.isscalar(z) or (isinstance(z, np.ndarray) and z.ndim == 0):
        return complex(z) * np.eye(tup.trace_dim, dtype=complex)
    z = as_complex_matrix(z, "trace operator")
    q, p = z.shape
    if p != tup.gamma0.shape[0] or q != tup.gamma1.shape[0]:
        raise InvalidInputError(
            f"trace operator must be {tup.gamma1.shape[0]}x{tup.gamma0.shape[0]}, got {q}x{p}"
        )
    return z


# ---------------------------------------------------------------------------
# JSON fixture serialization


def _encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _decode_matrix(rows, what: str) -> np.ndarray:
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"fixture field {what!r} is not a matrix of [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise InvalidInputError(f"fixture field {what!r} must be rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def fixture_to_json(fx: TupleFixture) -> str:
    doc = {
        "label": fx.label,
        "tolerance": fx.tolerance,
        "astar": _encode_matrix(fx.model.astar),
        "gram_x": _encode_matrix(fx.model.gram_x.matrix),
        "gamma0": _encode_matrix(fx.boundary.gamma0),
        "gamma1": _encode_matrix(fx.boundary.gamma1),
        "grams": {
            "minus": _encode_matrix(fx.boundary.gram_minus.matrix),
            "pivot": _encode_matrix(fx.boundary.gram_pivot.matrix),
            "plus": _encode_matrix(fx.boundary.gram_plus.matrix),
        },
        "pairing": _encode_matrix(fx.boundary.pairing),
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def fixture_from_json(text: str) -> TupleFixture:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"fixture JSON is malformed: {exc}") from exc
    for key in ("astar", "gram_x", "gamma0", "gamma1", "grams", "pairing", "tolerance"):
        if key not in doc:
            raise InvalidInputError(f"fixture JSON is missing field {key!r}")
    model = OperatorModel(
        astar=_decode_matrix(doc["astar"], "astar"),
        gram_x=GramMatrix(_decode_matrix(doc["gram_x"], "gram_x")),
        label=str(doc.get("label", "")),
    )
    tup = BoundaryTupleModel(
        gamma0=_decode_matrix(doc["gamma0"], "gamma0"),
        gamma1=_decode_matrix(doc["gamma1"], "gamma1"),
        gram_minus=GramMatrix(_decode_matrix(doc["grams"]["minus"], "grams.minus")),
        gram_pivot=GramMatrix(_decode_matrix(doc["grams"]["pivot"], "grams.pivot")),
        gram_plus=GramMatrix(_decode_matrix(doc["grams"]["plus"], "grams.plus")),
        pairing=_decode_matrix(doc["pairing"], "pairing"),
    )
    transform = TupleTransform.from_v(np.eye(tup.trace_dim), tup)
    return TupleFixture(
        model=model, boundary=tup, transform=transform, tolerance=float(doc["tolerance"])
    )
