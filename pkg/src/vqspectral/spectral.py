"""Legendre-Galerkin spectral core.

Builds compact Legendre bases that satisfy boundary conditions exactly,
Legendre-Gauss-Lobatto quadrature, the stiffness/mass/convection matrices,
forward transforms of forcing data, direct classical solves (the ground-truth
oracle), and the error metrics used to score predictions.

Conventions: all assembly happens on the reference interval [-1, 1] per
direction. Physical domains enter through an affine map whose Jacobian scales
derivative matrices (second derivative by J^2, first by J); the common measure
factor cancels between the operator and the right-hand side, so forward
transforms integrate against the reference measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BasisConstructionError,
    ConfigurationError,
    ContractViolation,
    DivisionGuardError,
    NumericError,
    SingularSystemError,
)

__all__ = [
    "EndpointCondition",
    "DirectionBC",
    "BoundarySpec",
    "CompactBasis",
    "QuadratureRule",
    "SpectralSystem",
    "SolutionField",
    "legendre_eval",
    "legendre_table",
    "lgl_rule",
    "basis_coeffs",
    "assemble_1d",
    "assemble_system",
    "forward_transform",
    "classical_solve",
    "reconstruct",
    "metrics",
    "BENCHMARK_PDES",
]

_MAX_NEWTON_ITER = 100


# ---------------------------------------------------------------------------
# Legendre polynomials


def legendre_table(max_degree: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of L_0..L_max_degree at the points x.

    Returns two arrays of shape (max_degree + 1, len(x)) built from the
    three-term recurrence; x must lie in [-1, 1].
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and (x.min() < -1.0 - 1e-14 or x.max() > 1.0 + 1e-14):
        raise ContractViolation(f"evaluation points must lie in [-1, 1], got range [{x.min()}, {x.max()}]")
    vals = np.zeros((max_degree + 1, x.size))
    ders = np.zeros_like(vals)
    vals[0] = 1.0
    if max_degree >= 1:
        vals[1] = x
        ders[1] = 1.0
    for k in range(1, max_degree):
        vals[k + 1] = ((2 * k + 1) * x * vals[k] - k * vals[k - 1]) / (k + 1)
        ders[k + 1] = ders[k - 1] + (2 * k + 1) * vals[k]
    return vals, ders


def legendre_eval(degree: int, x) -> np.ndarray:
    """L_degree evaluated at x (scalar or array), x in [-1, 1]."""
    if degree < 0:
        raise ContractViolation("degree must be >= 0")
    vals, _ = legendre_table(degree, x)
    out = vals[degree]
    return out if np.ndim(x) else float(out[0])


def legendre_deriv(degree: int, x) -> np.ndarray:
    """dL_degree/dx evaluated at x, x in [-1, 1]."""
    if degree < 0:
        raise ContractViolation("degree must be >= 0")
    _, ders = legendre_table(degree, x)
    out = ders[degree]
    return out if np.ndim(x) else float(out[0])


def _legendre_endpoint(degree: int, sign: int) -> tuple[float, float]:
    # L_k(+-1) = (+-1)^k, L_k'(+-1) = (+-1)^(k-1) k(k+1)/2
    val = 1.0 if (sign > 0 or degree % 2 == 0) else -1.0
    der = degree * (degree + 1) / 2.0
    if sign < 0 and degree % 2 == 0:
        der = -der
    return val, der


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Legendre-Gauss-Lobatto rule: order + 1 nodes including both endpoints."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def lgl_rule(order: int) -> QuadratureRule:
    """LGL quadrature of a given order (order + 1 nodes, exact to degree 2*order - 1).

    Interior nodes are the roots of L'_order, found by Newton iteration from
    Chebyshev-Gauss-Lobatto initial guesses; weights are 2 / (P(P+1) L_P(x)^2).
    """
    if order < 1:
        raise ContractViolation("quadrature order must be >= 1")
    p = order
    if p == 1:
        nodes = np.array([-1.0, 1.0])
    else:
        x = np.cos(np.pi * np.arange(1, p) / p)  # interior initial guesses
        for _ in range(_MAX_NEWTON_ITER):
            vals, ders = legendre_table(p, x)
            # L''_p from the Legendre ODE keeps the update self-contained
            second = (2.0 * x * ders[p] - p * (p + 1) * vals[p]) / (1.0 - x * x)
            step = ders[p] / second
            x = x - step
            if np.max(np.abs(step)) < 1e-15:
                break
        else:
            raise NumericError("LGL node search did not converge")
        nodes = np.concatenate(([-1.0], np.sort(x), [1.0]))
    lp = legendre_table(p, nodes)[0][p]
    weights = 2.0 / (p * (p + 1) * lp * lp)
    return QuadratureRule(nodes=nodes, weights=weights, order=p)


# ---------------------------------------------------------------------------
# Boundary conditions and compact bases


@dataclass(frozen=True)
class EndpointCondition:
    """Homogeneous endpoint constraint alpha*phi(x0) + beta*phi'(x0) = 0."""

    endpoint: float  # -1.0 or +1.0
    alpha: float
    beta: float


@dataclass(frozen=True)
class DirectionBC:
    """Two endpoint constraints pinning one spatial/temporal direction."""

    kind: str  # dirichlet | neumann | mixed | initial_value
    conditions: tuple[EndpointCondition, EndpointCondition]

    @staticmethod
    def dirichlet() -> "DirectionBC":
        return DirectionBC(
            "dirichlet",
            (EndpointCondition(-1.0, 1.0, 0.0), EndpointCondition(1.0, 1.0, 0.0)),
        )

    @staticmethod
    def neumann() -> "DirectionBC":
        return DirectionBC(
            "neumann",
            (EndpointCondition(-1.0, 0.0, 1.0), EndpointCondition(1.0, 0.0, 1.0)),
        )

    @staticmethod
    def mixed(left: tuple[float, float], right: tuple[float, float]) -> "DirectionBC":
        return DirectionBC(
            "mixed",
            (EndpointCondition(-1.0, *left), EndpointCondition(1.0, *right)),
        )

    @staticmethod
    def initial_value() -> "DirectionBC":
        # Both constraints sit at the left endpoint: phi(-1) = phi'(-1) = 0.
        # Used only for the temporal direction of the wave problem.
        return DirectionBC(
            "initial_value",
            (EndpointCondition(-1.0, 1.0, 0.0), EndpointCondition(-1.0, 0.0, 1.0)),
        )


def boundary_spec_for(kind: str) -> DirectionBC:
    table = {
        "dirichlet": DirectionBC.dirichlet,
        "neumann": DirectionBC.neumann,
        "initial_value": DirectionBC.initial_value,
    }
    if kind not in table:
        raise ConfigurationError(f"unknown boundary kind {kind!r}")
    return table[kind]()


@dataclass(frozen=True)
class BoundarySpec:
    """Per-direction boundary conditions for a d-dimensional problem."""

    directions: tuple[DirectionBC, ...]

    @property
    def direction_count(self) -> int:
        return len(self.directions)


@dataclass(frozen=True)
class CompactBasis:
    """Basis phi_k = L_k + a_k L_{k+1} + b_k L_{k+2}, k = 0..N-1."""

    n_modes: int
    a: np.ndarray
    b: np.ndarray
    bc: DirectionBC

    def eval_matrix(self, x: np.ndarray, derivative: int = 0) -> np.ndarray:
        """(N, len(x)) array of phi_k or its first/second derivative at x."""
        n = self.n_modes
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals, ders = legendre_table(n + 1, x)
        if derivative == 0:
            tab = vals
        elif derivative == 1:
            tab = ders
        elif derivative == 2:
            tab = np.zeros_like(vals)
            for k in range(1, n + 1):
                tab[k + 1] = tab[k - 1] + (2 * k + 1) * ders[k]
        else:
            raise ContractViolation("derivative order must be 0, 1 or 2")
        out = tab[:n] + self.a[:, None] * tab[1 : n + 1] + self.b[:, None] * tab[2 : n + 2]
        return out

    def endpoint_residuals(self) -> np.ndarray:
        """Max |condition residual| per mode; exact bases stay below 1e-12."""
        res = np.zeros(self.n_modes)
        for cond in self.bc.conditions:
            row = np.zeros(self.n_modes)
            for k in range(self.n_modes):
                acc = 0.0
                for coef, deg in ((1.0, k), (self.a[k], k + 1), (self.b[k], k + 2)):
                    val, der = _legendre_endpoint(deg, 1 if cond.endpoint > 0 else -1)
                    acc += coef * (cond.alpha * val + cond.beta * der)
                row[k] = acc
            res = np.maximum(res, np.abs(row))
        return res


def basis_coeffs(bc: DirectionBC, n_modes: int) -> CompactBasis:
    """Solve the per-mode 2x2 endpoint system for (a_k, b_k).

    Dirichlet and Neumann use their closed forms (a_k = 0 with b_k = -1 and
    b_k = -k(k+1)/((k+2)(k+3)) respectively); other condition pairs go through
    the explicit 2x2 solve.
    """
    if n_modes < 2:
        raise ContractViolation("a compact basis needs at least 2 modes")
    k = np.arange(n_modes, dtype=float)
    if bc.kind == "dirichlet":
        a = np.zeros(n_modes)
        b = -np.ones(n_modes)
    elif bc.kind == "neumann":
        a = np.zeros(n_modes)
        b = -(k * (k + 1.0)) / ((k + 2.0) * (k + 3.0))
    else:
        a = np.zeros(n_modes)
        b = np.zeros(n_modes)
        for kk in range(n_modes):
            mat = np.zeros((2, 2))
            rhs = np.zeros(2)
            for i, cond in enumerate(bc.conditions):
                sign = 1 if cond.endpoint > 0 else -1
                for j, deg in enumerate((kk + 1, kk + 2)):
                    val, der = _legendre_endpoint(deg, sign)
                    mat[i, j] = cond.alpha * val + cond.beta * der
                val, der = _legendre_endpoint(kk, sign)
                rhs[i] = -(cond.alpha * val + cond.beta * der)
            det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
            if abs(det) < 1e-12:
                raise BasisConstructionError(
                    f"degenerate endpoint conditions for mode {kk} ({bc.kind})"
                )
            sol = np.linalg.solve(mat, rhs)
            a[kk], b[kk] = sol
    return CompactBasis(n_modes=n_modes, a=a, b=b, bc=bc)


# ---------------------------------------------------------------------------
# Galerkin matrices


def _mass_closed_form(basis: CompactBasis) -> np.ndarray:
    """Symmetric banded mass matrix from Legendre orthogonality (exact)."""
    n = basis.n_modes
    a, b = basis.a, basis.b
    k = np.arange(n, dtype=float)
    norm = lambda m: 2.0 / (2.0 * m + 1.0)  # noqa: E731  integral of L_m^2
    m = np.zeros((n, n))
    diag = norm(k) + a * a * norm(k + 1) + b * b * norm(k + 2)
    np.fill_diagonal(m, diag)
    if n > 1:
        band1 = a[:-1] * norm(k[:-1] + 1) + a[1:] * b[:-1] * norm(k[:-1] + 2)
        idx = np.arange(n - 1)
        m[idx + 1, idx] = band1
        m[idx, idx + 1] = band1
    if n > 2:
        band2 = b[:-2] * norm(k[:-2] + 2)
        idx = np.arange(n - 2)
        m[idx + 2, idx] = band2
        m[idx, idx + 2] = band2
    return m


def _quadrature_bilinear(basis: CompactBasis, quad: QuadratureRule, d_row: int, d_col: int) -> np.ndarray:
    """General band entries: integral of (d_col-th deriv of phi_j)(d_row-th deriv of phi_k)."""
    row = basis.eval_matrix(quad.nodes, derivative=d_row)
    col = basis.eval_matrix(quad.nodes, derivative=d_col)
    return (row * quad.weights) @ col.T


def assemble_1d(kind: str, basis: CompactBasis, quad: QuadratureRule | None = None) -> np.ndarray:
    """Stiffness, mass, or convection matrix for one direction.

    stiffness: S_kj = integral phi_j'' phi_k; diagonal (4k+6) b_k for the
        Dirichlet/Neumann closed forms, quadrature otherwise.
    mass: M_kj = integral phi_j phi_k; closed-form bands, exact for any (a, b).
    convection: R_kj = integral phi_k' phi_j, the antisymmetric bidiagonal
        with R_{k,k-1} = 2 and R_{k,k+1} = -2 in the Dirichlet case.
    """
    n = basis.n_modes
    if quad is None:
        quad = lgl_rule(n + 4)
    if kind == "mass":
        return _mass_closed_form(basis)
    if kind == "stiffness":
        if basis.bc.kind in ("dirichlet", "neumann"):
            return np.diag((4.0 * np.arange(n) + 6.0) * basis.b)
        return _quadrature_bilinear(basis, quad, d_row=0, d_col=2)
    if kind == "convection":
        if basis.bc.kind == "dirichlet":
            r = np.zeros((n, n))
            idx = np.arange(n - 1)
            r[idx + 1, idx] = 2.0
            r[idx, idx + 1] = -2.0
            return r
        return _quadrature_bilinear(basis, quad, d_row=1, d_col=0).T.copy()
    raise ConfigurationError(f"unknown matrix kind {kind!r}")


# ---------------------------------------------------------------------------
# Systems


@dataclass(frozen=True)
class SpectralSystem:
    """Assembled operator plus everything needed to transform and evaluate.

    matrix has shape (K, K) with K = prod(N per direction). For d = 2 the flat
    index runs with the FIRST direction fastest, matching the forward
    transform's flattening; the second direction is the slow Kronecker factor.
    parametric_parts holds (B, C) with matrix(k) = B + k^2 C when the operator
    family is affine in a squared coefficient.
    """

    pde: str
    matrix: np.ndarray
    bases: tuple[CompactBasis, ...]
    quads: tuple[QuadratureRule, ...]
    domains: tuple[tuple[float, float], ...]
    params: dict = field(default_factory=dict)
    parametric_parts: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def direction_count(self) -> int:
        return len(self.bases)

    def grid(self) -> tuple[np.ndarray, ...]:
        """Physical quadrature nodes per direction."""
        out = []
        for quad, (lo, hi) in zip(self.quads, self.domains):
            out.append(lo + (hi - lo) * (quad.nodes + 1.0) / 2.0)
        return tuple(out)

    def jacobians(self) -> tuple[float, ...]:
        return tuple(2.0 / (hi - lo) for lo, hi in self.domains)


def _kron2(slow: np.ndarray, fast: np.ndarray) -> np.ndarray:
    # flat index = j_slow * N_fast + k_fast
    return np.kron(slow, fast)


BENCHMARK_PDES = ("rd1d", "helm1d", "cd1d", "wave1d", "rd2d", "helm2d", "cd2d", "joint_helm")


def assemble_system(
    pde: str,
    params: dict,
    bc: BoundarySpec,
    n_modes: int,
    *,
    quad_margin: int = 4,
    wave_horizon: float = 2.0,
) -> SpectralSystem:
    """Assemble the operator for one benchmark family.

    1D elliptic problems live on [-1, 1]; the wave problem lives on
    x in [0, 1], t in [0, wave_horizon] with an initial-value temporal basis.
    joint_helm additionally stores the (B, C) split with matrix(k) = B + k^2 C.
    """
    params = dict(params)
    directions = bc.directions
    quad_order = n_modes + quad_margin

    def build_direction(dir_bc: DirectionBC):
        basis = basis_coeffs(dir_bc, n_modes)
        quad = lgl_rule(quad_order)
        return basis, quad

    if pde in ("rd1d", "helm1d", "cd1d", "joint_helm") and len(directions) == 1:
        basis, quad = build_direction(directions[0])
        s = assemble_1d("stiffness", basis, quad)
        m = assemble_1d("mass", basis, quad)
        if pde == "rd1d":
            eps = float(params["epsilon"])
            matrix = -eps * s + m
            parts = None
        elif pde == "helm1d":
            k2 = float(params["k_squared"])
            matrix = s + k2 * m
            parts = None
        elif pde == "cd1d":
            if directions[0].kind != "dirichlet":
                raise ConfigurationError("cd1d supports only Dirichlet conditions")
            eps = float(params["epsilon"])
            nu = float(params.get("nu", 1.0))
            r = assemble_1d("convection", basis, quad)
            matrix = -eps * s + nu * r
            parts = None
        else:  # joint_helm, 1D
            k2 = float(params.get("k_squared", 0.0))
            matrix = s + k2 * m
            parts = (s, m)
        return SpectralSystem(
            pde=pde,
            matrix=matrix,
            bases=(basis,),
            quads=(quad,),
            domains=((-1.0, 1.0),),
            params=params,
            parametric_parts=parts,
        )

    if pde == "wave1d":
        if len(directions) != 2:
            raise ConfigurationError("wave1d needs a spatial and a temporal direction")
        space_bc, time_bc = directions
        if time_bc.kind != "initial_value":
            raise ConfigurationError("wave1d requires an initial_value temporal direction")
        basis_x, quad_x = build_direction(space_bc)
        basis_t, quad_t = build_direction(time_bc)
        sx = assemble_1d("stiffness", basis_x, quad_x)
        mx = assemble_1d("mass", basis_x, quad_x)
        st = assemble_1d("stiffness", basis_t, quad_t)
        mt = assemble_1d("mass", basis_t, quad_t)
        jx = 2.0 / 1.0  # x in [0, 1]
        jt = 2.0 / wave_horizon
        matrix = jt * jt * _kron2(st, mx) - jx * jx * _kron2(mt, sx)
        return SpectralSystem(
            pde=pde,
            matrix=matrix,
            bases=(basis_x, basis_t),
            quads=(quad_x, quad_t),
            domains=((0.0, 1.0), (0.0, wave_horizon)),
            params={**params, "wave_horizon": wave_horizon},
        )

    if pde in ("rd2d", "helm2d", "cd2d", "joint_helm") and len(directions) == 2:
        basis_x, quad_x = build_direction(directions[0])
        basis_y, quad_y = build_direction(directions[1])
        sx = assemble_1d("stiffness", basis_x, quad_x)
        mx = assemble_1d("mass", basis_x, quad_x)
        sy = assemble_1d("stiffness", basis_y, quad_y)
        my = assemble_1d("mass", basis_y, quad_y)
        laplace = _kron2(my, sx) + _kron2(sy, mx)
        mm = _kron2(my, mx)
        if pde == "rd2d":
            eps = float(params["epsilon"])
            matrix = -eps * laplace + mm
            parts = None
        elif pde == "helm2d":
            k2 = float(params["k_squared"])
            matrix = laplace + k2 * mm
            parts = None
        elif pde == "cd2d":
            if directions[0].kind != "dirichlet" or directions[1].kind != "dirichlet":
                raise ConfigurationError("cd2d supports only Dirichlet conditions")
            eps = float(params["epsilon"])
            nu1 = float(params.get("nu1", 1.0))
            nu2 = float(params.get("nu2", 1.0))
            rx = assemble_1d("convection", basis_x, quad_x)
            ry = assemble_1d("convection", basis_y, quad_y)
            matrix = -eps * laplace + nu1 * _kron2(my, rx) + nu2 * _kron2(ry.T, mx)
            parts = None
        else:  # joint_helm, 2D
            k2 = float(params.get("k_squared", 0.0))
            matrix = laplace + k2 * mm
            parts = (laplace, mm)
        return SpectralSystem(
            pde=pde,
            matrix=matrix,
            bases=(basis_x, basis_y),
            quads=(quad_x, quad_y),
            domains=((-1.0, 1.0), (-1.0, 1.0)),
            params=params,
            parametric_parts=parts,
        )

    raise ConfigurationError(f"unsupported pde/boundary combination: {pde} with d={len(directions)}")


# ---------------------------------------------------------------------------
# Transforms, solves, metrics


def forward_transform(f_values: np.ndarray, system: SpectralSystem) -> tuple[np.ndarray, float]:
    """Project forcing samples on the quadrature grid onto the basis.

    1D input has shape (Q+1,); 2D input has shape (Qx+1, Qy+1) with the first
    axis the fast direction. Returns (F, ||F||) with F flattened fast-first.
    """
    if system.direction_count == 1:
        quad = system.quads[0]
        f_values = np.asarray(f_values, dtype=float)
        if f_values.shape != quad.nodes.shape:
            raise ContractViolation(
                f"expected {quad.nodes.shape[0]} samples, got {f_values.shape}"
            )
        phi = system.bases[0].eval_matrix(quad.nodes)
        coeffs = phi @ (quad.weights * f_values)
    else:
        qx, qy = system.quads
        f_values = np.asarray(f_values, dtype=float)
        if f_values.shape != (qx.nodes.size, qy.nodes.size):
            raise ContractViolation(
                f"expected grid {(qx.nodes.size, qy.nodes.size)}, got {f_values.shape}"
            )
        phix = system.bases[0].eval_matrix(qx.nodes)
        phiy = system.bases[1].eval_matrix(qy.nodes)
        tensor = (phix * qx.weights) @ f_values @ (phiy * qy.weights).T
        coeffs = tensor.T.reshape(-1)  # slow index = second direction
    return coeffs, float(np.linalg.norm(coeffs))


@dataclass(frozen=True)
class SolutionField:
    """Spectral coefficients plus their nodal reconstruction."""

    coefficients: np.ndarray
    nodal_values: np.ndarray
    scale: float = 1.0


def reconstruct(system: SpectralSystem, coefficients: np.ndarray) -> np.ndarray:
    """Nodal values of sum_k alpha_k phi_k on the quadrature grid."""
    coefficients = np.asarray(coefficients, dtype=float)
    if system.direction_count == 1:
        phi = system.bases[0].eval_matrix(system.quads[0].nodes)
        return coefficients @ phi
    n = system.bases[0].n_modes
    grid_coeffs = coefficients.reshape(-1, n)  # (j_slow, k_fast)
    phix = system.bases[0].eval_matrix(system.quads[0].nodes)
    phiy = system.bases[1].eval_matrix(system.quads[1].nodes)
    return phix.T @ grid_coeffs.T @ phiy  # (Qx+1, Qy+1)


def classical_solve(system: SpectralSystem, rhs: np.ndarray) -> SolutionField:
    """Direct dense solve of the spectral system; the ground-truth oracle."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (system.size,):
        raise ContractViolation(f"rhs must have length {system.size}")
    cond = np.linalg.cond(system.matrix)
    if not np.isfinite(cond) or cond > 1e13:
        raise SingularSystemError("spectral operator is numerically singular", cond)
    alpha = np.linalg.solve(system.matrix, rhs)
    return SolutionField(coefficients=alpha, nodal_values=reconstruct(system, alpha))


def _quad_weights_grid(system: SpectralSystem) -> np.ndarray:
    if system.direction_count == 1:
        return system.quads[0].weights
    wx = system.quads[0].weights
    wy = system.quads[1].weights
    return np.outer(wx, wy)


def metrics(
    pred: SolutionField,
    truth: SolutionField,
    quad: QuadratureRule | SpectralSystem | None = None,
) -> dict:
    """MAE, relative L2 (quadrature-weighted) and relative L-infinity errors.

    Passing a SpectralSystem tensorizes the weights for 2D grids; passing None
    falls back to unweighted vectors (synthetic systems without a grid).
    """
    diff = np.asarray(pred.nodal_values) - np.asarray(truth.nodal_values)
    ref = np.asarray(truth.nodal_values)
    if isinstance(quad, SpectralSystem):
        w = _quad_weights_grid(quad)
    elif isinstance(quad, QuadratureRule):
        w = quad.weights
    else:
        w = np.ones_like(ref)
    ref_l2 = np.sqrt(np.sum(w * ref * ref))
    ref_linf = np.max(np.abs(ref))
    if ref_l2 == 0.0 or ref_linf == 0.0:
        raise DivisionGuardError("reference solution has zero norm")
    return {
        "mae": float(np.mean(np.abs(diff))),
        "rel_l2": float(np.sqrt(np.sum(w * diff * diff)) / ref_l2),
        "rel_linf": float(np.max(np.abs(diff)) / ref_linf),
    }


def export_matrix_csv(matrix: np.ndarray, path) -> None:
    """Row-major CSV dump with 17 significant digits (debug aid)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
