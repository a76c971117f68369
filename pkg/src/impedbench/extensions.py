"""Boundary-parametrized restrictions of a maximal operator.

Builds the dissipative restrictions selected by an impedance condition
z*gamma0 - i*gamma1 = 0 or, equivalently, by a contraction k over the pivot
space through the constraint (k + I) gamma0_v + i (k - I) gamma1_v = 0.
The two parametrizations are linked by the Cayley map k = (z - I)(z + I)^{-1}
applied to the pivot-space version of z; their constraint rows differ by an
invertible left factor, so they cut out the same subspace.

All extension operators live in coordinates of a gram-orthonormal basis of
the constrained subspace, so plain Euclidean eigenvalue and singular value
routines apply to them directly.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalFailureError
from .linalg import (
    GramMatrix,
    as_complex_matrix,
    gram_operator_norm,
    numerical_rank,
)
from .tuples import (
    BoundaryTupleModel,
    TupleFixture,
    _as_trace_operator,
    accretivity_defect,
    to_boundary_triple,
)

# Relative singular value cutoff separating a constraint's row space from
# its nullspace.
NULLSPACE_TOL = 1e-10

# Reciprocal condition number below which a Cayley denominator or a
# boundary-value solve is treated as singular.
RCOND_FLOOR = 1e-12

DEFAULT_RESOLVENT_POINTS = (1j, 2j, 1.0 + 1j, -1.0 + 3j)


# ---------------------------------------------------------------------------
# Cayley transform between accretive operators and contractions


def cayley(z) -> np.ndarray:
    """Map z to (z - I)(z + I)^{-1}; rejects z with -1 in its spectrum."""
    z = as_complex_matrix(np.atleast_2d(z), "cayley input")
    if z.shape[0] != z.shape[1]:
        raise InvalidInputError("cayley input must be square")
    eye = np.eye(z.shape[0])
    den = z + eye
    sv = sla.svdvals(den)
    if sv[-1] <= RCOND_FLOOR * max(sv[0], 1.0):
        raise InvalidInputError("cayley transform undefined: -1 is in the spectrum")
    return sla.solve(den.T, (z - eye).T).T


def inverse_cayley(k) -> np.ndarray:
    """Map k to (I - k)^{-1}(I + k); rejects k with 1 in its spectrum."""
    k = as_complex_matrix(np.atleast_2d(k), "inverse cayley input")
    if k.shape[0] != k.shape[1]:
        raise InvalidInputError("inverse cayley input must be square")
    eye = np.eye(k.shape[0])
    den = eye - k
    sv = sla.svdvals(den)
    if sv[-1] <= RCOND_FLOOR * max(sv[0], 1.0):
        raise InvalidInputError(
            "inverse cayley undefined: 1 is in the spectrum of the contraction"
        )
    return sla.solve(den, eye + k)


def cayley_identity_defect(z) -> float:
    """Residual of the algebraic identity cayley(z) + I = 2 z (z + I)^{-1}."""
    z = as_complex_matrix(np.atleast_2d(z), "cayley input")
    eye = np.eye(z.shape[0])
    lhs = cayley(z) + eye
    rhs = 2.0 * sla.solve((z + eye).T, z.T).T
    return float(np.linalg.norm(lhs - rhs, 2))


@dataclass
class ContractionParam:
    """A candidate contraction over the pivot space with its metric."""

    matrix: np.ndarray
    gram: GramMatrix

    def __post_init__(self):
        self.matrix = as_complex_matrix(np.atleast_2d(self.matrix), "contraction")
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidInputError("contraction parameter must be square")
        if self.matrix.shape[0] != self.gram.dim:
            raise InvalidInputError("contraction parameter does not match its gram")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        """Operator norm in the gram metric."""
        return gram_operator_norm(self.matrix, self.gram, self.gram)

    def is_contraction(self, tol: float = 1e-10) -> bool:
        return self.norm <= 1.0 + tol


def impedance_to_contraction(z, fx: TupleFixture) -> ContractionParam:
    """Cayley-transform an impedance operator into its pivot contraction.

    The impedance z acts from the minus traces to the plus traces; its
    pivot-space version is v_natural z v, and the returned parameter is the
    Cayley image of that. Accretive z yields a gram-metric contraction.
    """
    tup = fx.boundary
    z = _as_trace_operator(z, tup)
    t = fx.transform
    z_piv = t.v_natural @ z @ t.v
    return ContractionParam(cayley(z_piv), tup.gram_pivot)


def contraction_to_impedance(param: ContractionParam, fx: TupleFixture) -> np.ndarray:
    """Invert impedance_to_contraction; returns z in the original trace coords."""
    t = fx.transform
    if param.dim != fx.boundary.gram_pivot.dim:
        raise InvalidInputError("contraction does not match the fixture pivot space")
    z_piv = inverse_cayley(param.matrix)
    rhs = sla.solve(t.v.T, z_piv.T).T  # z_piv v^{-1}
    return sla.solve(t.v_natural, rhs)


# ---------------------------------------------------------------------------
# Constraint subspaces and compressed extension operators


def constraint_from_contraction(k, triple: BoundaryTupleModel) -> np.ndarray:
    """Rows of (k + I) gamma0_v + i (k - I) gamma1_v over the pivot triple."""
    k = as_complex_matrix(np.atleast_2d(k), "contraction")
    r = triple.gamma0.shape[0]
    if k.shape != (r, r):
        raise InvalidInputError(f"contraction must be {r}x{r}, got {k.shape}")
    eye = np.eye(r)
    return (k + eye) @ triple.gamma0 + 1j * (k - eye) @ triple.gamma1


def constraint_from_impedance(z, tup: BoundaryTupleModel) -> np.ndarray:
    """Rows of z gamma0 - i gamma1 in the original trace coordinates."""
    z = _as_trace_operator(z, tup)
    return z @ tup.gamma0 - 1j * tup.gamma1


def constraint_nullspace(constraint, state_dim: int) -> np.ndarray:
    """Orthonormal (Euclidean) basis of the kernel of a constraint matrix."""
    c = as_complex_matrix(constraint, "constraint")
    if c.shape[1] != state_dim:
        raise InvalidInputError("constraint does not act on the state space")
    scale = np.linalg.norm(c, 2)
    if scale == 0.0:
        return np.eye(state_dim, dtype=complex)
    basis = sla.null_space(c, rcond=NULLSPACE_TOL).astype(complex)
    if basis.shape[1] == 0:
        raise InvalidInputError("constraint kernel is trivial; nothing to restrict to")
    return basis


@dataclass
class ExtensionModel:
    """Compression of the maximal operator to a constrained subspace.

    op is expressed in a basis that is orthonormal for the state gram, so
    its numerical range and spectrum can be read off with Euclidean tools.
    basis holds that basis columnwise; constraint holds the rows that cut
    out the subspace.
    """

    op: np.ndarray
    basis: np.ndarray
    constraint: np.ndarray
    source: str
    fixture_label: str
    invariance_defect: float = field(default=float("nan"))

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    def hermitian_defect(self) -> float:
        scale = max(np.linalg.norm(self.op, 2), 1.0)
        return float(np.linalg.norm(self.op - self.op.conj().T, 2) / scale)

    def max_im_numrange(self) -> float:
        """Largest imaginary part over the numerical range of op."""
        h = (self.op - self.op.conj().T) / 2j
        return float(sla.eigvalsh(h)[-1])

    def eigenvalues(self) -> np.ndarray:
        vals = sla.eigvals(self.op)
        order = np.lexsort((vals.imag, vals.real))
        return vals[order]


def restrict_extension(fx: TupleFixture, k=None, z=None) -> ExtensionModel:
    """Compress the maximal operator to the subspace cut out by k or z.

    Exactly one of k (pivot-space contraction, or ContractionParam) and z
    (impedance in the original trace coordinates) must be given.
    """
    if (k is None) == (z is None):
        raise InvalidInputError("pass exactly one of k and z")
    tup = fx.boundary
    if k is not None:
        if isinstance(k, ContractionParam):
            k = k.matrix
        triple, _ = to_boundary_triple(tup, fx.transform)
        constraint = constraint_from_contraction(k, triple)
        source = "from-contraction"
    else:
        constraint = constraint_from_impedance(z, tup)
        source = "from-impedance"

    raw = constraint_nullspace(constraint, tup.state_dim)
    gram_x = fx.model.gram_x
    basis = gram_x.orthonormalize(raw)
    m = fx.model.astar
    op = basis.conj().T @ gram_x.matrix @ (m @ basis)
    # How far the subspace is from being invariant under the operator; the
    # compression is dissipative regardless, but eigenvalues are only exact
    # on (nearly) invariant subspaces.
    image = m @ basis
    proj = basis @ (basis.conj().T @ (gram_x.matrix @ image))
    denom = max(np.linalg.norm(image), 1e-30)
    defect = float(np.linalg.norm(image - proj) / denom)
    return ExtensionModel(
        op=op,
        basis=basis,
        constraint=constraint,
        source=source,
        fixture_label=fx.label,
        invariance_defect=defect,
    )


def mdissipativity_report(model: ExtensionModel, points=DEFAULT_RESOLVENT_POINTS) -> dict:
    """Dissipativity diagnostics for a compressed extension.

    Checks that the numerical range stays in the closed lower half plane and
    that the resolvent norm at each upper half plane point obeys the
    1 / Im(z) bound that dissipativity forces.
    """
    max_im = model.max_im_numrange()
    checks = []
    eye = np.eye(model.dim)
    for z in points:
        z = complex(z)
        if z.imag <= 0:
            raise InvalidInputError("resolvent checkpoints must have positive imaginary part")
        sv = sla.svdvals(model.op - z * eye)
        bound = float(1.0 / sv[-1]) if sv[-1] > 0 else float("inf")
        limit = 1.0 / z.imag
        checks.append(
            {
                "z": [z.real, z.imag],
                "resolvent_norm": bound,
                "limit": limit,
                "ok": bool(bound <= limit * (1.0 + 1e-8) + 1e-12),
            }
        )
    eigs = model.eigenvalues()
    return {
        "fixture": model.fixture_label,
        "source": model.source,
        "dim": model.dim,
        "max_im_numrange": max_im,
        "dissipative": bool(max_im <= 1e-10),
        "hermitian_defect": model.hermitian_defect(),
        "invariance_defect": model.invariance_defect,
        "resolvent_checks": checks,
        "max_im_eig": float(eigs.imag.max()) if eigs.size else 0.0,
        "all_checks_ok": bool(all(c["ok"] for c in checks) and max_im <= 1e-10),
    }


# ---------------------------------------------------------------------------
# Resolvent differences of two boundary conditions


@dataclass
class ResolventRankReport:
    """Rank comparison between a resolvent difference and a parameter difference."""

    z: complex
    fixture_label: str
    sigma_resolvent: np.ndarray
    sigma_parameter: np.ndarray
    rank_resolvent: int
    rank_parameter: int
    tolerance: float
    realization_residual: float

    @property
    def satisfied(self) -> bool:
        return self.rank_resolvent <= self.rank_parameter

    def summary(self) -> str:
        verdict = "ok" if self.satisfied else "VIOLATED"
        return (
            f"rank-check {self.fixture_label} at z={self.z:g}: "
            f"rank(resolvent diff)={self.rank_resolvent} "
            f"<= rank(parameter diff)={self.rank_parameter}: {verdict}"
        )


def _realize_resolvent_pieces(fx: TupleFixture, z: complex):
    """Shared boundary-value machinery for resolvents at a fixed point z.

    Returns (y0, hb, triple) where y0 is the resolvent of the reference
    condition gamma1_v = 0 composed with the projection onto its attainable
    range, and hb spans the state vectors whose image under (op - z) is
    invisible to that range. Every resolvent realized from these pieces maps
    onto its constraint kernel and agrees with y0 up to an hb-correction.
    """
    tup = fx.boundary
    triple, _ = to_boundary_triple(tup, fx.transform)
    gram_x = fx.model.gram_x
    n = tup.state_dim

    ref_basis = gram_x.orthonormalize(constraint_nullspace(triple.gamma1, n))
    m_z = fx.model.astar - z * np.eye(n)
    shifted = m_z @ ref_basis
    e, _ = sla.qr(shifted, mode="economic")
    core = e.conj().T @ shifted
    sv = sla.svdvals(core)
    if sv[-1] <= RCOND_FLOOR * sv[0]:
        raise NumericalFailureError(
            f"z={z:g} is (numerically) a spectral point of the reference condition; "
            "move the evaluation point"
        )
    y0 = ref_basis @ sla.solve(core, e.conj().T)

    row = e.conj().T @ m_z
    hb = sla.null_space(row, rcond=NULLSPACE_TOL).astype(complex)
    if hb.shape[1] != tup.trace_dim:
        raise NumericalFailureError(
            "unexpected surrogate deficiency dimension "
            f"{hb.shape[1]} (expected {tup.trace_dim}) at z={z:g}"
        )
    return y0, hb, triple, m_z, e


def _resolvent_for_constraint(constraint, y0, hb):
    c_hb = constraint @ hb
    sv = sla.svdvals(c_hb)
    if sv[-1] <= RCOND_FLOOR * max(sv[0], 1.0):
        raise NumericalFailureError(
            "boundary condition is degenerate at this evaluation point; "
            "the constraint does not split off the deficiency directions"
        )
    correction = hb @ sla.solve(c_hb, constraint @ y0)
    return y0 - correction


def resolvent_difference_rank(
    fx: TupleFixture,
    k1,
    k2,
    z: complex = 1j,
    tol: float = 1e-8,
) -> ResolventRankReport:
    """Compare rank of a resolvent difference against the parameter difference.

    Both conditions are given as pivot-space contractions k1, k2. Their
    resolvents at z are realized on the full state space through a common
    reference condition, which makes the difference exactly expressible as
    (deficiency columns) x (k1 - k2) x (rows), hence of rank at most
    rank(k1 - k2).
    """
    if isinstance(k1, ContractionParam):
        k1 = k1.matrix
    if isinstance(k2, ContractionParam):
        k2 = k2.matrix
    z = complex(z)
    y0, hb, triple, m_z, e = _realize_resolvent_pieces(fx, z)
    c1 = constraint_from_contraction(k1, triple)
    c2 = constraint_from_contraction(k2, triple)
    r1 = _resolvent_for_constraint(c1, y0, hb)
    r2 = _resolvent_for_constraint(c2, y0, hb)

    diff = r2 - r1
    sigma_res = sla.svdvals(diff)
    k1m = np.atleast_2d(np.asarray(k1, dtype=complex))
    k2m = np.atleast_2d(np.asarray(k2, dtype=complex))
    sigma_par = sla.svdvals(k2m - k1m)

    rank_res = numerical_rank(diff, tol) if sigma_res[0] > 0 else 0
    rank_par = numerical_rank(k2m - k1m, tol) if sigma_par[0] > 0 else 0

    # (op - z) r_i - identity must vanish on the attainable range for both
    # realizations; this certifies them as genuine resolvents.
    res = 0.0
    for r in (r1, r2):
        res = max(res, float(np.linalg.norm(e.conj().T @ (m_z @ r) - e.conj().T, 2)))

    return ResolventRankReport(
        z=z,
        fixture_label=fx.label,
        sigma_resolvent=sigma_res,
        sigma_parameter=sigma_par,
        rank_resolvent=rank_res,
        rank_parameter=rank_par,
        tolerance=tol,
        realization_residual=res,
    )


def accretivity_of_impedance(z, fx: TupleFixture) -> float:
    """Convenience re-export: smallest real part of the impedance form."""
    return accretivity_defect(z, fx.boundary)
