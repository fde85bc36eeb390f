"""Phase-aware overlap losses, gradients through the full pipeline, recovery.

For each instance the loss compares the circuit state against the normalized
forward transform |F> of its forcing through

    gamma = Re sum_l c_l <F|P_l|psi>,     beta = sum_l d_l <psi|P_l|psi>,

with {c_l} the expansion of the operator A and {d_l} that of A^dag A. The
normalized objective is 1 - gamma/sqrt(beta); the quadratic form
(gamma - sqrt(beta))^2 shares its global minimum and is the default training
objective because the fraction can destabilize early training. The standard
fidelity cost 1 - |<F|A psi>|^2/beta is kept as the comparison baseline; it
cannot distinguish psi from -psi, which is exactly the defect the phase-aware
form removes.

Exact-expectation evaluation contracts the dense reconstructions of the
expansions (identical to the per-term Pauli sums to reconstruction accuracy);
``per_term=True`` switches to the explicit sums.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import anglenet, qsim
from .errors import (
    ConfigurationError,
    ContractViolation,
    DegenerateDenominatorError,
    PhaseContaminationWarning,
)
from .pauli import (
    MeasurementGrouping,
    PauliExpansion,
    adjoint_product,
    decompose,
    group_commuting,
    normal_operator,
)
from .spectral import SolutionField, SpectralSystem, reconstruct

__all__ = [
    "ParametricContext",
    "LossContext",
    "LossValue",
    "build_loss_context",
    "context_for_system",
    "with_targets",
    "loss_phase_aware",
    "loss_unnormalized",
    "loss_vqls_standard",
    "loss_parametric",
    "grad_total",
    "imag_overlap_diagnostic",
    "recover_solution",
]

_BETA_TOL = 1e-12


@dataclass(frozen=True)
class ParametricContext:
    """Fixed expansions for an operator family A(k) = B + k^2 C.

    gamma(k) assembles from (B, C) with weights (1, k^2); the denominator
    radicand from (B^dag B, B^dag C, C^dag B, C^dag C) with weights
    (1, k^2, k^2, k^4). All six are decomposed once and reused for every k.
    """

    expansion_b: PauliExpansion
    expansion_c: PauliExpansion
    expansion_bb: PauliExpansion
    expansion_bc: PauliExpansion
    expansion_cb: PauliExpansion
    expansion_cc: PauliExpansion
    mat_b: np.ndarray
    mat_c: np.ndarray
    mat_bb: np.ndarray
    mat_bc: np.ndarray
    mat_cb: np.ndarray
    mat_cc: np.ndarray


@dataclass(frozen=True)
class LossContext:
    """Everything a loss evaluation needs for a batch of instances."""

    n_qubits: int
    expansion_a: PauliExpansion
    expansion_ada: PauliExpansion
    grouping_num: MeasurementGrouping
    grouping_den: MeasurementGrouping
    target_states: np.ndarray  # (D, K), unit rows
    raw_norms: np.ndarray  # (D,)
    a_matrix: np.ndarray  # dense reconstruction of expansion_a
    system: SpectralSystem | None = None
    parametric: ParametricContext | None = None
    k_values: np.ndarray | None = None  # per-instance wave numbers

    @property
    def n_instances(self) -> int:
        return self.target_states.shape[0]

    @property
    def dim(self) -> int:
        return self.target_states.shape[1]


def _build_parametric(parts, drop_tol=1e-14) -> ParametricContext:
    b_mat, c_mat = parts
    eb = decompose(b_mat, "B", drop_tol)
    ec = decompose(c_mat, "C", drop_tol)
    ebb = adjoint_product(eb, eb, drop_tol, "B^dag B")
    ebc = adjoint_product(eb, ec, drop_tol, "B^dag C")
    ecb = adjoint_product(ec, eb, drop_tol, "C^dag B")
    ecc = adjoint_product(ec, ec, drop_tol, "C^dag C")
    return ParametricContext(
        expansion_b=eb,
        expansion_c=ec,
        expansion_bb=ebb,
        expansion_bc=ebc,
        expansion_cb=ecb,
        expansion_cc=ecc,
        mat_b=eb.to_matrix(),
        mat_c=ec.to_matrix(),
        mat_bb=ebb.to_matrix(),
        mat_bc=ebc.to_matrix(),
        mat_cb=ecb.to_matrix(),
        mat_cc=ecc.to_matrix(),
    )


def build_loss_context(
    matrix: np.ndarray,
    raw_targets: np.ndarray,
    *,
    system: SpectralSystem | None = None,
    parametric_parts=None,
    k_values: np.ndarray | None = None,
    tag: str = "A",
) -> LossContext:
    """Decompose the operator, group its terms, and normalize the targets."""
    matrix = np.asarray(matrix)
    raw_targets = np.atleast_2d(np.asarray(raw_targets, dtype=float))
    if raw_targets.shape[1] != matrix.shape[0]:
        raise ContractViolation("target dimension does not match the operator")
    norms = np.linalg.norm(raw_targets, axis=1)
    if np.any(norms < 1e-300):
        raise ContractViolation("zero-norm target state")
    expansion_a = decompose(matrix, tag)
    expansion_ada = normal_operator(expansion_a)
    ctx = LossContext(
        n_qubits=expansion_a.n_qubits,
        expansion_a=expansion_a,
        expansion_ada=expansion_ada,
        grouping_num=group_commuting(expansion_a),
        grouping_den=group_commuting(expansion_ada),
        target_states=raw_targets / norms[:, None],
        raw_norms=norms,
        a_matrix=expansion_a.to_matrix(),
        system=system,
        parametric=_build_parametric(parametric_parts) if parametric_parts is not None else None,
        k_values=None if k_values is None else np.asarray(k_values, dtype=float),
    )
    return ctx


def context_for_system(
    system: SpectralSystem, raw_targets: np.ndarray, k_values=None
) -> LossContext:
    return build_loss_context(
        system.matrix,
        raw_targets,
        system=system,
        parametric_parts=system.parametric_parts,
        k_values=k_values,
        tag=system.pde,
    )


def with_targets(ctx: LossContext, raw_targets: np.ndarray, k_values=None) -> LossContext:
    """Same operator context, different instance set (e.g. held-out split)."""
    raw_targets = np.atleast_2d(np.asarray(raw_targets, dtype=float))
    norms = np.linalg.norm(raw_targets, axis=1)
    return LossContext(
        n_qubits=ctx.n_qubits,
        expansion_a=ctx.expansion_a,
        expansion_ada=ctx.expansion_ada,
        grouping_num=ctx.grouping_num,
        grouping_den=ctx.grouping_den,
        target_states=raw_targets / norms[:, None],
        raw_norms=norms,
        a_matrix=ctx.a_matrix,
        system=ctx.system,
        parametric=ctx.parametric,
        k_values=None if k_values is None else np.asarray(k_values, dtype=float),
    )


@dataclass(frozen=True)
class LossValue:
    total: float
    per_instance: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray


def _check_states(ctx: LossContext, states: np.ndarray) -> np.ndarray:
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    if states.shape != ctx.target_states.shape:
        raise ContractViolation(
            f"states shaped {states.shape}, expected {ctx.target_states.shape}"
        )
    return states


def _gamma_beta_dense(ctx: LossContext, states: np.ndarray):
    applied = states @ ctx.a_matrix.T  # rows A psi_i
    gamma = np.einsum("ij,ij->i", ctx.target_states, applied).real
    beta = np.einsum("ij,ij->i", applied.conj(), applied).real
    return gamma, beta


def _gamma_beta_per_term(ctx: LossContext, states: np.ndarray):
    d = states.shape[0]
    gamma = np.zeros(d)
    beta = np.zeros(d)
    for i in range(d):
        gamma[i] = qsim.overlap_of_expansion(
            ctx.target_states[i].astype(complex), ctx.expansion_a, states[i]
        ).real
        beta[i] = qsim.expectation_of_expansion(states[i], ctx.expansion_ada)
    return gamma, beta


def _guard_beta(beta: np.ndarray) -> np.ndarray:
    if np.any(beta <= _BETA_TOL):
        raise DegenerateDenominatorError(
            f"denominator radicand fell to {beta.min():.3e}; A|psi> is vanishing"
        )
    return beta


def loss_phase_aware(ctx: LossContext, states: np.ndarray, per_term: bool = False) -> LossValue:
    """Normalized objective: mean over instances of 1 - gamma/sqrt(beta)."""
    states = _check_states(ctx, states)
    gamma, beta = (
        _gamma_beta_per_term(ctx, states) if per_term else _gamma_beta_dense(ctx, states)
    )
    _guard_beta(beta)
    per = 1.0 - gamma / np.sqrt(beta)
    return LossValue(float(per.mean()), per, gamma, beta)


def loss_unnormalized(ctx: LossContext, states: np.ndarray, per_term: bool = False) -> LossValue:
    """Quadratic objective: mean of (gamma - sqrt(beta))^2; default for training."""
    states = _check_states(ctx, states)
    gamma, beta = (
        _gamma_beta_per_term(ctx, states) if per_term else _gamma_beta_dense(ctx, states)
    )
    _guard_beta(beta)
    per = (gamma - np.sqrt(beta)) ** 2
    return LossValue(float(per.mean()), per, gamma, beta)


def loss_vqls_standard(ctx: LossContext, states: np.ndarray) -> float:
    """Fidelity baseline: mean of 1 - |<F|A psi>|^2 / beta (sign-blind)."""
    states = _check_states(ctx, states)
    applied = states @ ctx.a_matrix.T
    overlap = np.einsum("ij,ij->i", ctx.target_states.astype(complex).conj(), applied)
    beta = _guard_beta(np.einsum("ij,ij->i", applied.conj(), applied).real)
    per = 1.0 - np.abs(overlap) ** 2 / beta
    return float(per.mean())


def _parametric_gamma_beta(ctx: LossContext, states: np.ndarray, k: np.ndarray):
    p = ctx.parametric
    k2 = k * k
    k4 = k2 * k2
    gb = np.einsum("ij,ij->i", ctx.target_states, states @ p.mat_b.T).real
    gc = np.einsum("ij,ij->i", ctx.target_states, states @ p.mat_c.T).real
    gamma = gb + k2 * gc

    def quad(mat):
        return np.einsum("ij,ij->i", states.conj(), states @ mat.T).real

    beta = quad(p.mat_bb) + k2 * (quad(p.mat_bc) + quad(p.mat_cb)) + k4 * quad(p.mat_cc)
    return gamma, beta


def loss_parametric(
    ctx: LossContext,
    states: np.ndarray,
    k: np.ndarray | None = None,
    objective: str = "normalized",
) -> LossValue:
    """Loss for the operator family A(k) = B + k^2 C from the six fixed expansions.

    The stiffness/mass decompositions are reused across every k; only the
    scalar weights (1, k^2) for gamma and (1, k^2, k^2, k^4) for beta change.
    """
    if ctx.parametric is None:
        raise ConfigurationError("context carries no parametric expansions")
    states = _check_states(ctx, states)
    if k is None:
        k = ctx.k_values
    if k is None:
        raise ConfigurationError("per-instance wave numbers are required")
    k = np.broadcast_to(np.asarray(k, dtype=float), (states.shape[0],))
    gamma, beta = _parametric_gamma_beta(ctx, states, k)
    _guard_beta(beta)
    if objective == "normalized":
        per = 1.0 - gamma / np.sqrt(beta)
    elif objective == "unnormalized":
        per = (gamma - np.sqrt(beta)) ** 2
    else:
        raise ConfigurationError(f"unknown objective {objective!r}")
    return LossValue(float(per.mean()), per, gamma, beta)


# ---------------------------------------------------------------------------
# End-to-end gradients


def _loss_weights(objective: str, gamma: np.ndarray, beta: np.ndarray):
    """(dL_i/dgamma_i, dL_i/dbeta_i) for the chosen per-instance objective."""
    root = np.sqrt(beta)
    if objective == "unnormalized":
        return 2.0 * (gamma - root), -(gamma - root) / root
    if objective == "normalized":
        return -1.0 / root, gamma / (2.0 * beta * root)
    if objective == "vqls":
        # L = 1 - |z|^2 / beta handled separately (needs the complex overlap)
        raise ConfigurationError("vqls gradients use _vqls_cotangents")
    raise ConfigurationError(f"unknown objective {objective!r}")


def _instance_matrices(ctx: LossContext):
    """Per-instance (A_i, N_i) where N_i = A_i^dag A_i, honoring the parametric split."""
    d = ctx.n_instances
    if ctx.parametric is None or ctx.k_values is None:
        return [ctx.a_matrix] * d, None
    p = ctx.parametric
    mats = []
    for k in ctx.k_values:
        mats.append(p.mat_b + (k * k) * p.mat_c)
    return mats, None


def grad_total(
    ctx: LossContext,
    program: qsim.GateProgram,
    net: anglenet.NetworkState,
    batch_features,
    objective: str = "unnormalized",
    gradient_mode: str = "adjoint",
):
    """Mean-over-batch network-parameter gradients of the chosen objective.

    The chain runs features -> angles (network) -> state (circuit) -> loss.
    "adjoint" differentiates the statevector exactly in reverse; the
    "parameter_shift" mode reproduces the same d(loss)/d(angle) from shifted
    circuit evaluations (expectations at +-pi/2 divided by 2, linear overlaps
    divided by 2*sqrt(2)). Returns (grads, LossValue) with grads shaped like
    the network parameters.
    """
    d = ctx.n_instances
    features = list(batch_features)
    if len(features) != d:
        raise ContractViolation("feature batch size does not match the context")
    angles = np.stack([anglenet.forward(net, f) for f in features])
    if angles.shape[1] != program.n_slots:
        raise ContractViolation("network output does not match circuit slot count")
    states = qsim.run_batch(program, angles)

    use_vqls = objective == "vqls"
    mats, _ = _instance_matrices(ctx)
    applied = np.stack([mats[i] @ states[i] for i in range(d)])
    overlaps = np.einsum("ij,ij->i", ctx.target_states.astype(complex).conj(), applied)
    gamma = overlaps.real
    beta = _guard_beta(np.einsum("ij,ij->i", applied.conj(), applied).real)
    if use_vqls:
        per = 1.0 - np.abs(overlaps) ** 2 / beta
    elif objective == "unnormalized":
        per = (gamma - np.sqrt(beta)) ** 2
    elif objective == "normalized":
        per = 1.0 - gamma / np.sqrt(beta)
    else:
        raise ConfigurationError(f"unknown objective {objective!r}")
    value = LossValue(float(per.mean()), per, gamma, beta)

    if gradient_mode == "adjoint":
        cot = np.zeros_like(states)
        for i in range(d):
            adag = mats[i].conj().T
            if use_vqls:
                # L_i = 1 - z conj(z)/beta with z = <F|A psi>
                cot[i] = -(overlaps[i] / beta[i]) * (adag @ ctx.target_states[i].astype(complex))
                cot[i] += (np.abs(overlaps[i]) ** 2 / beta[i] ** 2) * (adag @ applied[i])
            else:
                wg, wb = _loss_weights(objective, gamma[i : i + 1], beta[i : i + 1])
                cot[i] = wg[0] * (adag @ ctx.target_states[i].astype(complex)) / 2.0
                cot[i] += wb[0] * (adag @ applied[i])
        dtheta = qsim.adjoint_gradient(program, angles, cot)
    elif gradient_mode == "parameter_shift":
        dtheta = np.zeros_like(angles)
        shift = np.pi / 2.0
        for i in range(d):
            if use_vqls:
                raise ConfigurationError("parameter_shift gradients cover the phase-aware objectives")
            wg, wb = _loss_weights(objective, gamma[i : i + 1], beta[i : i + 1])
            target = ctx.target_states[i].astype(complex)
            for j in range(program.n_slots):
                plus = angles[i].copy()
                plus[j] += shift
                minus = angles[i].copy()
                minus[j] -= shift
                sp_ = qsim.run(program, plus)
                sm_ = qsim.run(program, minus)
                ap, am = mats[i] @ sp_, mats[i] @ sm_
                dgamma = (np.vdot(target, ap).real - np.vdot(target, am).real) / (
                    2.0 * np.sqrt(2.0)
                )
                dbeta = (np.vdot(ap, ap).real - np.vdot(am, am).real) / 2.0
                dtheta[i, j] = wg[0] * dgamma + wb[0] * dbeta
    else:
        raise ConfigurationError(f"unknown gradient mode {gradient_mode!r}")

    grads = None
    for i in range(d):
        g_i, _ = anglenet.backward(net, features[i], dtheta[i])
        if grads is None:
            grads = [(dw.copy(), db.copy()) for dw, db in g_i]
        else:
            for acc, (dw, db) in zip(grads, g_i):
                acc[0][...] += dw
                acc[1][...] += db
    grads = [(dw / d, db / d) for dw, db in grads]
    return grads, value


def imag_overlap_diagnostic(ctx: LossContext, states: np.ndarray) -> np.ndarray:
    """Optional diagnostic: per-instance Im <F|A psi> (vanishes at the optimum).

    Not part of any objective; useful for monitoring residual phase content of
    entangling ansaetze.
    """
    states = _check_states(ctx, states)
    applied = states @ ctx.a_matrix.T
    return np.einsum("ij,ij->i", ctx.target_states.astype(complex).conj(), applied).imag


def recover_solution(state: np.ndarray, ctx: LossContext, instance: int) -> SolutionField:
    """Rescale the converged unit state back to physical coefficients.

    alpha = Re(psi) * ||F_raw|| / sqrt(beta), so that A alpha reproduces the
    unnormalized right-hand side at the optimum. A non-negligible imaginary
    residue on a real-solution problem triggers a warning rather than an error.
    """
    state = np.asarray(state, dtype=complex)
    mats, _ = _instance_matrices(ctx)
    applied = mats[instance] @ state
    beta = float(np.vdot(applied, applied).real)
    _guard_beta(np.array([beta]))
    norm = float(np.linalg.norm(state))
    residue = float(np.linalg.norm(state.imag)) / max(norm, 1e-300)
    if residue > 1e-6:
        warnings.warn(
            f"instance {instance}: imaginary residue {residue:.3e} in recovered state",
            PhaseContaminationWarning,
            stacklevel=2,
        )
    scale = float(ctx.raw_norms[instance]) / np.sqrt(beta)
    coeffs = state.real * scale
    if ctx.system is not None:
        nodal = reconstruct(ctx.system, coeffs)
    else:
        nodal = coeffs.copy()
    return SolutionField(coefficients=coeffs, nodal_values=nodal, scale=scale)
