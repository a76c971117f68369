"""P1 triangle discretization of the impedance-damped acoustic problem.

The continuous model is a wave equation with an impedance condition on the
boundary. Looking for modes p(x) e^{-i lam t} and integrating by parts gives
the quadratic family

    lam^2 (beta p, q) + i lam (zeta p, q)_boundary - (alpha_inv grad p, grad q) = 0,

so accretive zeta (Re zeta >= 0) pushes eigenvalues into the closed lower
half-plane. Everything here is dense and desk-scale on purpose: assembly is
exact for piecewise-constant data, the companion eigensolve picks the real
LAPACK driver whenever the coefficient structure allows it, and the
Crank-Nicolson march satisfies a per-step energy identity exactly, so decay
checks test the model rather than integrator artifacts.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalFailureError
from .reports import EnergyTrace, ModeEntry, SpectrumReport, fmt_float, write_text_atomic

MIN_TRIANGLE_AREA = 1e-14
SPD_FLOOR = 1e-10
QEP_RESIDUAL_TOL = 1e-8
ARTIFACT_RADIUS = 1e-8
# companion matrices are dense 2n x 2n; past this the desk-scale pitch breaks
MAX_SOLVE_VERTICES = 2048

MESH_HEADER = "mesh2d v1"

# 3-point Gauss rule on [0, 1], exact through degree 5
_EDGE_QUAD_T = np.array(
    [0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)]
)
_EDGE_QUAD_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


# ---------------------------------------------------------------------------
# Mesh


@dataclass
class Mesh:
    """Conforming triangulation with labeled boundary edges."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: list

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=int)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=int)
        self.boundary_labels = [str(s) for s in self.boundary_labels]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidInputError("vertices must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise InvalidInputError("triangles must be an (m, 3) index array")
        if self.boundary_edges.ndim != 2 or self.boundary_edges.shape[1] != 2:
            raise InvalidInputError("boundary edges must be an (k, 2) index array")
        if len(self.boundary_labels) != self.boundary_edges.shape[0]:
            raise InvalidInputError("one label per boundary edge required")
        nv = self.vertices.shape[0]
        for name, idx in (("triangle", self.triangles), ("boundary", self.boundary_edges)):
            if idx.size and (idx.min() < 0 or idx.max() >= nv):
                raise InvalidInputError(f"{name} vertex index out of range")
        self._validate_orientation()
        self._validate_boundary()

    def _validate_orientation(self):
        areas = self.signed_areas()
        bad = np.nonzero(areas <= MIN_TRIANGLE_AREA)[0]
        if bad.size:
            raise InvalidInputError(
                f"triangle {bad[0]} is degenerate or negatively oriented "
                f"(signed area {areas[bad[0]]:.3e})"
            )

    def _validate_boundary(self):
        # edges used by exactly one triangle must coincide with the declared
        # boundary, and every boundary vertex must have loop degree 2
        count = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                count[key] = count.get(key, 0) + 1
        rim = {k for k, c in count.items() if c == 1}
        declared = set()
        for a, b in self.boundary_edges:
            key = (min(a, b), max(a, b))
            if key in declared:
                raise InvalidInputError(f"boundary edge {a}-{b} listed twice")
            declared.add(key)
        if declared != rim:
            missing = rim - declared
            extra = declared - rim
            if extra:
                a, b = next(iter(extra))
                raise InvalidInputError(
                    f"edge {a}-{b} is declared boundary but not on the mesh rim"
                )
            a, b = next(iter(missing))
            raise InvalidInputError(f"rim edge {a}-{b} is missing from the boundary list")
        degree = {}
        for a, b in declared:
            degree[a] = degree.get(a, 0) + 1
            degree[b] = degree.get(b, 0) + 1
        odd = [v for v, d in degree.items() if d != 2]
        if odd:
            raise InvalidInputError(f"boundary does not close into loops at vertex {odd[0]}")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_lengths(self) -> np.ndarray:
        seg = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(seg[:, 0], seg[:, 1])

    def label_set(self) -> set:
        return set(self.boundary_labels)

    def save(self, path: str) -> None:
        lines = [MESH_HEADER, str(self.n_vertices)]
        for x, y in self.vertices:
            lines.append(f"v {fmt_float(x)} {fmt_float(y)}")
        for i, j, k in self.triangles:
            lines.append(f"t {i} {j} {k}")
        for (i, j), label in zip(self.boundary_edges, self.boundary_labels):
            lines.append(f"b {i} {j} {label}")
        write_text_atomic(path, "\n".join(lines) + "\n")


def square_mesh(n: int, lx: float = 1.0, ly: float = 1.0, nx: int = None, ny: int = None) -> Mesh:
    """Structured triangulation of [0, lx] x [0, ly], two triangles per cell."""
    nx = n if nx is None else nx
    ny = n if ny is None else ny
    if nx < 1 or ny < 1:
        raise InvalidInputError("subdivision counts must be at least 1")
    if lx <= 0 or ly <= 0:
        raise InvalidInputError("side lengths must be positive")
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    vid = lambda i, j: j * (nx + 1) + i
    vertices = np.array([[xs[i], ys[j]] for j in range(ny + 1) for i in range(nx + 1)])
    triangles = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    edges, labels = [], []
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        labels.append("bottom")
    for j in range(ny):
        edges.append((vid(nx, j), vid(nx, j + 1)))
        labels.append("right")
    for i in range(nx, 0, -1):
        edges.append((vid(i, ny), vid(i - 1, ny)))
        labels.append("top")
    for j in range(ny, 0, -1):
        edges.append((vid(0, j), vid(0, j - 1)))
        labels.append("left")
    return Mesh(vertices, np.array(triangles), np.array(edges), labels)


def disk_polygon_mesh(n_r: int, n_theta: int) -> Mesh:
    """Polar mesh of the inscribed regular polygon of the unit disk."""
    if n_r < 1 or n_theta < 3:
        raise InvalidInputError("need n_r >= 1 and n_theta >= 3")
    angles = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vertices = [(0.0, 0.0)]
    for k in range(1, n_r + 1):
        r = k / n_r
        for th in angles:
            vertices.append((r * np.cos(th), r * np.sin(th)))
    ring = lambda k, j: 1 + (k - 1) * n_theta + (j % n_theta)
    triangles = []
    for j in range(n_theta):
        triangles.append((0, ring(1, j), ring(1, j + 1)))
    for k in range(1, n_r):
        for j in range(n_theta):
            a0, a1 = ring(k, j), ring(k, j + 1)
            b0, b1 = ring(k + 1, j), ring(k + 1, j + 1)
            triangles.append((a0, b0, b1))
            triangles.append((a0, b1, a1))
    edges = [(ring(n_r, j), ring(n_r, j + 1)) for j in range(n_theta)]
    labels = ["rim"] * n_theta
    return Mesh(np.array(vertices), np.array(triangles), np.array(edges), labels)


def mesh_from_file(path: str) -> Mesh:
    """Load the plain-text mesh format; parse errors carry line numbers."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read mesh file {path}: {exc}") from exc
    lines = raw.splitlines()
    if not lines or lines[0].strip() != MESH_HEADER:
        raise InvalidInputError(f"{path} line 1: expected header '{MESH_HEADER}'")
    if len(lines) < 2:
        raise InvalidInputError(f"{path} line 2: missing vertex count")
    try:
        n_declared = int(lines[1].strip())
    except ValueError:
        raise InvalidInputError(f"{path} line 2: vertex count must be an integer")
    vertices, triangles, edges, labels = [], [], [], []
    for ln, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        kind = parts[0]
        try:
            if kind == "v" and len(parts) == 3:
                vertices.append((float(parts[1]), float(parts[2])))
            elif kind == "t" and len(parts) == 4:
                triangles.append(tuple(int(p) for p in parts[1:4]))
            elif kind == "b" and len(parts) == 4:
                edges.append((int(parts[1]), int(parts[2])))
                labels.append(parts[3])
            else:
                raise InvalidInputError(f"{path} line {ln}: unrecognized record '{line.strip()}'")
        except ValueError:
            raise InvalidInputError(f"{path} line {ln}: malformed number in '{line.strip()}'")
    if len(vertices) != n_declared:
        raise InvalidInputError(
            f"{path} line 2: declared {n_declared} vertices, found {len(vertices)}"
        )
    try:
        return Mesh(np.array(vertices, dtype=float).reshape(-1, 2),
                    np.array(triangles, dtype=int).reshape(-1, 3),
                    np.array(edges, dtype=int).reshape(-1, 2), labels)
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc


def build_mesh(shape: str) -> Mesh:
    """Dispatch on 'square{n}', 'rectangle{nx,ny,lx,ly}', 'disk_polygon{nr,nt}', or a file path."""
    shape = shape.strip()
    if shape.endswith("}") and "{" in shape:
        name, _, argstr = shape[:-1].partition("{")
        args = [a.strip() for a in argstr.split(",")] if argstr.strip() else []
        try:
            if name == "square" and len(args) == 1:
                return square_mesh(int(args[0]))
            if name == "rectangle" and len(args) == 4:
                return square_mesh(0, nx=int(args[0]), ny=int(args[1]),
                                   lx=float(args[2]), ly=float(args[3]))
            if name == "disk_polygon" and len(args) == 2:
                return disk_polygon_mesh(int(args[0]), int(args[1]))
        except ValueError:
            raise InvalidInputError(f"malformed shape arguments in '{shape}'")
        raise InvalidInputError(f"unknown shape '{shape}'")
    return mesh_from_file(shape)


# ---------------------------------------------------------------------------
# Coefficients and assembly


@dataclass(frozen=True)
class MaterialCoefficients:
    """Per-triangle 2x2 SPD flux weight and positive mass weight.

    Scalars/single matrices broadcast over the mesh; alpha_inv defaults to
    the identity and beta to one, which is the plain acoustic case.
    """

    alpha_inv: object = None
    beta: object = 1.0

    def resolve(self, mesh: Mesh):
        nt = mesh.n_triangles
        if self.alpha_inv is None:
            a = np.broadcast_to(np.eye(2), (nt, 2, 2)).copy()
        else:
            a = np.asarray(self.alpha_inv, dtype=float)
            if a.shape == (2, 2):
                a = np.broadcast_to(a, (nt, 2, 2)).copy()
            elif a.shape != (nt, 2, 2):
                raise InvalidInputError("alpha_inv must be 2x2 or one 2x2 block per triangle")
        if np.abs(a[:, 0, 1] - a[:, 1, 0]).max(initial=0.0) > 1e-12:
            raise InvalidInputError("alpha_inv blocks must be symmetric")
        # closed-form eigenvalues of symmetric 2x2 blocks
        half_tr = 0.5 * (a[:, 0, 0] + a[:, 1, 1])
        disc = np.sqrt(0.25 * (a[:, 0, 0] - a[:, 1, 1]) ** 2 + a[:, 0, 1] ** 2)
        if (half_tr - disc).min(initial=np.inf) < SPD_FLOOR:
            raise InvalidInputError("alpha_inv must be positive definite")
        b = np.asarray(self.beta, dtype=float)
        if b.ndim == 0:
            b = np.full(nt, float(b))
        elif b.shape != (nt,):
            raise InvalidInputError("beta must be scalar or one value per triangle")
        if b.min(initial=np.inf) < SPD_FLOOR:
            raise InvalidInputError("beta must be positive")
        return a, b


@dataclass
class QepMatrices:
    """Stiffness, boundary damping, and mass matrices of the quadratic family."""

    k_stiff: np.ndarray
    c_bdry: np.ndarray
    m_mass: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.k_stiff.shape[0]


def _resolve_edge_zeta(zeta, labels: set):
    """Normalize the boundary coefficient argument to a per-label mapping."""
    if isinstance(zeta, dict):
        missing = labels - set(zeta)
        if missing:
            raise InvalidInputError(f"no impedance given for boundary label '{sorted(missing)[0]}'")
        return dict(zeta)
    return {label: zeta for label in labels}


def assemble(mesh: Mesh, mat: MaterialCoefficients = None, zeta=0.0) -> QepMatrices:
    """Exact P1 integrals; sampled boundary coefficients use 3-point Gauss.

    zeta may be a number (applied to every boundary label), a callable of
    position, or a dict mapping each boundary label to either.
    """
    mat = mat if mat is not None else MaterialCoefficients()
    alpha, beta = mat.resolve(mesh)
    n = mesh.n_vertices
    areas = mesh.signed_areas()

    pts = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    # grad of the barycentric function at vertex i is rot90(opposite edge)/(2A)
    opp = pts[:, [2, 0, 1], :] - pts[:, [1, 2, 0], :]
    grads = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / (2.0 * areas)[:, None, None]
    flux = np.einsum("tie,tef,tjf->tij", grads, alpha, grads) * areas[:, None, None]

    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass = mass_ref[None, :, :] * (beta * areas)[:, None, None]

    k_stiff = np.zeros((n, n))
    m_mass = np.zeros((n, n))
    rows = mesh.triangles[:, :, None].repeat(3, axis=2)
    cols = mesh.triangles[:, None, :].repeat(3, axis=1)
    np.add.at(k_stiff, (rows.ravel(), cols.ravel()), flux.ravel())
    np.add.at(m_mass, (rows.ravel(), cols.ravel()), mass.ravel())

    per_label = _resolve_edge_zeta(zeta, mesh.label_set())
    c_bdry = np.zeros((n, n), dtype=complex)
    min_sampled_re = np.inf
    exact_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    lengths = mesh.boundary_lengths()
    for (i, j), label, length in zip(mesh.boundary_edges, mesh.boundary_labels, lengths):
        z_here = per_label[label]
        if callable(z_here):
            a, b = mesh.vertices[i], mesh.vertices[j]
            block = np.zeros((2, 2), dtype=complex)
            for t, w in zip(_EDGE_QUAD_T, _EDGE_QUAD_W):
                x = (1.0 - t) * a + t * b
                zv = complex(z_here(x[0], x[1]))
                min_sampled_re = min(min_sampled_re, zv.real)
                shape_fn = np.array([1.0 - t, t])
                block += w * zv * np.outer(shape_fn, shape_fn)
            block *= length
        else:
            zv = complex(z_here)
            min_sampled_re = min(min_sampled_re, zv.real)
            block = zv * length * exact_mass
        c_bdry[np.ix_([i, j], [i, j])] += block

    _check_qep_invariants(k_stiff, c_bdry, m_mass, min_sampled_re)
    meta = {
        "n_vertices": n,
        "n_triangles": mesh.n_triangles,
        "boundary_edges": int(mesh.boundary_edges.shape[0]),
        "min_sampled_re_zeta": float(min_sampled_re),
    }
    return QepMatrices(k_stiff.astype(complex), c_bdry, m_mass.astype(complex), meta)


def _check_qep_invariants(k, c, m, min_re_zeta):
    scale_k = np.abs(k).max()
    if np.abs(k - k.T).max() > 1e-12 * scale_k:
        raise NumericalFailureError("stiffness lost symmetry during assembly")
    ones = np.ones(k.shape[0])
    if np.abs(k @ ones).max() > 1e-10 * max(scale_k, 1.0):
        raise NumericalFailureError("stiffness does not annihilate constants")
    ev = sla.eigvalsh(k)
    if ev[0] < -1e-10 * max(scale_k, 1.0) or (k.shape[0] > 1 and ev[1] < 1e-10 * max(scale_k, 1.0)):
        raise NumericalFailureError("stiffness kernel is not exactly the constant direction")
    try:
        sla.cholesky(m, lower=True)
    except sla.LinAlgError:
        raise NumericalFailureError("mass matrix is not positive definite")
    if min_re_zeta >= 0.0 and np.any(c):
        herm = 0.5 * (c + c.conj().T)
        live = np.nonzero(np.abs(herm).sum(axis=1))[0]
        if live.size:
            sub = herm[np.ix_(live, live)]
            low = sla.eigvalsh(sub)[0]
            if low < -1e-12 * np.abs(sub).max():
                raise NumericalFailureError(
                    "boundary damping lost positivity despite accretive coefficients"
                )


# ---------------------------------------------------------------------------
# Quadratic eigenvalue solve


def _spectral_norm_hermitian(a: np.ndarray) -> float:
    w = sla.eigvalsh(a)
    return float(max(abs(w[0]), abs(w[-1])))


def _spectral_norm_boundary(c: np.ndarray) -> float:
    live = np.nonzero(np.abs(c).sum(axis=1) + np.abs(c).sum(axis=0))[0]
    if live.size == 0:
        return 0.0
    return float(sla.svdvals(c[np.ix_(live, live)])[0])


def _is_constant_direction(p: np.ndarray) -> bool:
    nrm = np.linalg.norm(p)
    if nrm == 0.0:
        return False
    return np.linalg.norm(p - p.mean()) <= 1e-6 * nrm


def solve_qep(q: QepMatrices, n_want: int = 24) -> SpectrumReport:
    """Eigenvalues of lam^2 M p + i lam C p - K p = 0 nearest the origin.

    The first-order companion is solved by the cheapest applicable dense
    driver: a generalized Hermitian solve when C = 0, a real companion when
    C is purely real (rotate by lam = -i mu) or purely imaginary, and the
    complex driver otherwise. Near-zero pairs whose eigenvector is constant
    are tagged quotient-artifact: they live in the direction the stiffness
    energy cannot see.
    """
    if n_want < 1:
        raise InvalidInputError("n_want must be at least 1")
    n = q.dim
    if n > MAX_SOLVE_VERTICES:
        raise InvalidInputError(
            f"dense companion solve capped at {MAX_SOLVE_VERTICES} vertices, got {n}"
        )
    k = np.asarray(q.k_stiff, dtype=complex)
    c = np.asarray(q.c_bdry, dtype=complex)
    m = np.asarray(q.m_mass, dtype=complex)
    if max(np.abs(k.imag).max(), np.abs(m.imag).max()) > 1e-14 * max(np.abs(k).max(), 1.0):
        raise InvalidInputError("stiffness and mass must be real symmetric")
    kr, mr = k.real, m.real

    zeta_zero = not np.any(c)
    c_scale = np.abs(c).max() if not zeta_zero else 0.0
    c_real = (not zeta_zero) and np.abs(c.imag).max() <= 1e-14 * c_scale
    c_imag = (not zeta_zero) and np.abs(c.real).max() <= 1e-14 * c_scale

    if zeta_zero:
        path = "hermitian"
        mu, vecs = sla.eigh(kr, mr)
        # the constant mode sits at mu = 0 up to roundoff; clamp it so the
        # genuine zero eigenvalue is reported once instead of as +-sqrt(eps)
        floor = 1e-12 * max(abs(mu[-1]), 1.0)
        lams, pvecs = [], []
        for j, m_j in enumerate(mu):
            if abs(m_j) <= floor and _is_constant_direction(vecs[:, j]):
                lams.append(0.0 + 0.0j)
                pvecs.append(vecs[:, j].astype(complex))
                continue
            root = math.sqrt(max(m_j, 0.0))
            lams.append(complex(root))
            pvecs.append(vecs[:, j].astype(complex))
            if root > 0.0:
                lams.append(complex(-root))
                pvecs.append(vecs[:, j].astype(complex))
        lams = np.array(lams)
        pvecs = np.array(pvecs).T
    else:
        try:
            if c_real:
                path = "real-rotated"
                top = np.hstack([sla.solve(mr, c.real, assume_a="pos"),
                                 -sla.solve(mr, kr, assume_a="pos")])
                comp = np.vstack([top, np.hstack([np.eye(n), np.zeros((n, n))])])
                w, v = sla.eig(comp)
                lams = -1j * w
            elif c_imag:
                path = "real-direct"
                top = np.hstack([sla.solve(mr, c.imag, assume_a="pos"),
                                 sla.solve(mr, kr, assume_a="pos")])
                comp = np.vstack([top, np.hstack([np.eye(n), np.zeros((n, n))])])
                w, v = sla.eig(comp)
                lams = w.astype(complex)
            else:
                path = "complex"
                top = np.hstack([sla.solve(mr, -1j * c),
                                 sla.solve(mr, kr, assume_a="pos").astype(complex)])
                comp = np.vstack([top, np.hstack([np.eye(n), np.zeros((n, n))]).astype(complex)])
                w, v = sla.eig(comp)
                lams = w
        except sla.LinAlgError as exc:
            raise NumericalFailureError(f"companion eigensolve failed: {exc}") from exc
        if not np.all(np.isfinite(lams)):
            raise NumericalFailureError("companion pencil produced non-finite eigenvalues")
        pvecs = v[n:, :]

    norm_k = _spectral_norm_hermitian(kr)
    norm_m = _spectral_norm_hermitian(mr)
    norm_c = _spectral_norm_boundary(c)

    # classify first, then check residuals for the selected columns in one
    # BLAS-3 pass instead of a matvec per eigenpair
    order = np.argsort(np.abs(lams), kind="stable")
    kept_idx, artifact_idx = [], []
    for j in order:
        p = pvecs[:, j]
        if not np.any(p):
            continue
        if (
            path != "hermitian"
            and abs(lams[j]) < ARTIFACT_RADIUS
            and _is_constant_direction(p)
        ):
            artifact_idx.append(j)
        elif len(kept_idx) < n_want:
            kept_idx.append(j)
    selected = kept_idx + artifact_idx
    lam_sel = lams[selected]
    p_sel = pvecs[:, selected]
    qep_cols = (
        (m @ p_sel) * (lam_sel * lam_sel)[None, :]
        + (c @ p_sel) * (1j * lam_sel)[None, :]
        - k @ p_sel
    )
    denom = (
        np.abs(lam_sel) ** 2 * norm_m + np.abs(lam_sel) * norm_c + norm_k
    ) * np.linalg.norm(p_sel, axis=0)
    residuals = np.linalg.norm(qep_cols, axis=0) / denom

    entries = []
    for pos, j in enumerate(selected):
        lam = complex(lam_sel[pos])
        resid = float(residuals[pos])
        tag = "quotient-artifact" if pos >= len(kept_idx) else "fem"
        if resid > QEP_RESIDUAL_TOL:
            raise NumericalFailureError(
                f"eigenpair at {lam:.6g} has residual {resid:.3e} above {QEP_RESIDUAL_TOL:g}"
            )
        entries.append(
            ModeEntry(re_lambda=lam.real, im_lambda=lam.imag, residual=resid, mode_tag=tag)
        )
    meta = {
        "path": path,
        "dim": n,
        "requested": n_want,
        "returned": len(kept_idx),
        "artifacts": len(artifact_idx),
    }
    return SpectrumReport("fem", entries, metadata=meta)


# ---------------------------------------------------------------------------
# Crank-Nicolson energy march


def cn_energy_march(q: QepMatrices, initial, dt: float, steps: int) -> EnergyTrace:
    """March u' = p, M p' = -K u - C p and record E = u*Ku + p*Mp.

    The trapezoidal update satisfies E_next - E = -(dt/2) s* Herm(C) s with
    s = p_next + p exactly, so monotone decay for accretive coefficients is
    a property of the scheme, not an observation about step size. Constant
    shifts of u never enter E (the stiffness annihilates them).
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if steps < 0:
        raise InvalidInputError("steps must be nonnegative")
    u0, p0 = initial
    u = np.asarray(u0, dtype=complex).ravel().copy()
    p = np.asarray(p0, dtype=complex).ravel().copy()
    n = q.dim
    if u.size != n or p.size != n:
        raise InvalidInputError("initial state size does not match the matrices")
    k, c, m = q.k_stiff, q.c_bdry, q.m_mass

    lhs = m + 0.25 * dt * dt * k + 0.5 * dt * c
    rhs = m - 0.25 * dt * dt * k - 0.5 * dt * c
    try:
        with warnings.catch_warnings():
            # singularity is checked explicitly on the factor below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(lhs)
    except sla.LinAlgError as exc:
        raise NumericalFailureError(f"time-step system could not be factored: {exc}") from exc
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-14 * max(diag.max(), 1.0):
        raise NumericalFailureError("time-step system is singular at this dt")

    def energy(uv, pv) -> float:
        return float((uv.conj() @ (k @ uv)).real + (pv.conj() @ (m @ pv)).real)

    energies = [energy(u, p)]
    for _ in range(steps):
        p_next = sla.lu_solve((lu, piv), rhs @ p - dt * (k @ u))
        u = u + 0.5 * dt * (p + p_next)
        p = p_next
        energies.append(energy(u, p))
    meta = {"steps": steps, "dim": n, "dt": dt}
    return EnergyTrace("cn-march", dt, np.array(energies), metadata=meta)


# ---------------------------------------------------------------------------
# Convergence study


def convergence_study(shape: str, h_schedule, zeta, reference: SpectrumReport,
                      n_want: int = 32) -> dict:
    """Eigenvalue errors against a trusted reference over a refinement ladder.

    shape is 'square' (level n means square{n}) or 'disk_polygon' (level n
    means disk_polygon{n, 4n}). Each reference eigenvalue pairs with the
    nearest computed non-artifact eigenvalue when the gap is below 0.5;
    unmatched references are reported, not fatal.
    """
    levels = [int(x) for x in h_schedule]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInputError("h_schedule must be strictly increasing with >= 2 levels")
    if shape not in ("square", "disk_polygon"):
        raise InvalidInputError("convergence shapes are 'square' and 'disk_polygon'")
    ref_vals = [complex(e.re_lambda, e.im_lambda) for e in reference.entries]
    if not ref_vals:
        raise InvalidInputError("reference spectrum is empty")

    specs, errors = [], []
    for n in levels:
        spec = f"square{{{n}}}" if shape == "square" else f"disk_polygon{{{n},{4 * n}}}"
        specs.append(spec)
        mesh = build_mesh(spec)
        rep = solve_qep(assemble(mesh, zeta=zeta), n_want=max(n_want, 4 * len(ref_vals) + 8))
        computed = np.array(
            [complex(e.re_lambda, e.im_lambda) for e in rep.entries if e.mode_tag == "fem"]
        )
        row = []
        for rv in ref_vals:
            if computed.size == 0:
                row.append(None)
                continue
            gaps = np.abs(computed - rv)
            jbest = int(np.argmin(gaps))
            row.append(float(gaps[jbest]) if gaps[jbest] < 0.5 else None)
        errors.append(row)

    orders = []
    for (n_c, row_c), (n_f, row_f) in zip(zip(levels, errors), zip(levels[1:], errors[1:])):
        ratio = math.log(n_f / n_c, 2.0)
        pair = []
        for e_c, e_f in zip(row_c, row_f):
            if e_c is None or e_f is None or e_f == 0.0:
                pair.append(None)
            else:
                pair.append(math.log(e_c / e_f, 2.0) / ratio)
        orders.append(pair)

    unmatched = sum(1 for row in errors for e in row if e is None)
    return {
        "shape": shape,
        "levels": levels,
        "mesh_specs": specs,
        "h": [1.0 / n for n in levels],
        "reference": [[v.real, v.imag] for v in ref_vals],
        "errors": errors,
        "orders": orders,
        "finest_orders": orders[-1] if orders else [],
        "unmatched": unmatched,
    }


def convergence_table_csv(result: dict) -> str:
    lines = ["level,h,ref_re,ref_im,abs_error"]
    for n, h, row in zip(result["levels"], result["h"], result["errors"]):
        for (ref_re, ref_im), err in zip(result["reference"], row):
            val = fmt_float(err) if err is not None else "unmatched"
            lines.append(f"{n},{fmt_float(h)},{fmt_float(ref_re)},{fmt_float(ref_im)},{val}")
    return "\n".join(lines) + "\n"
