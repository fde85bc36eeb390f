"""Dataset generation, optimizers, and the full-batch training loop.

Training is unsupervised: gradients flow only through the weak-form residual
loss, never through the classically solved truth fields, which exist purely
for evaluation. All randomness is funneled through seeded generators so a
rerun on one platform reproduces every history bit for bit (wall-clock
timestamps excepted).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import anglenet, loss as loss_mod, qsim
from .errors import ConfigurationError, ContractViolation, DivergenceError
from .spectral import SolutionField, SpectralSystem, classical_solve, forward_transform, metrics

__all__ = [
    "DatasetSpec",
    "Split",
    "Dataset",
    "generate_dataset",
    "feature_vector",
    "trig_forcing_1d",
    "trig_forcing_2d",
    "wave_forcing",
    "AdamState",
    "adam_step",
    "LbfgsState",
    "lbfgs_step",
    "lbfgs_minimize",
    "TrainConfig",
    "EpochRow",
    "RunRecord",
    "train",
    "evaluate_split",
    "write_run_record",
    "read_run_record",
]

FAMILIES = ("shallow_ry", "trig_1d", "trig_2d", "wave_family", "joint_k")


def trig_forcing_1d(h1, m1, h2, m2, x):
    return h1 * np.sin(m1 * x) + h2 * np.cos(m2 * x)


def trig_forcing_2d(h1, m1, h2, m2, x, y):
    return h1 * np.sin(m1 * (x + y)) + h2 * np.cos(m2 * (x + y))


def wave_forcing(omega, x, t):
    """Space-time forcing family whose exact solution is
    (t^2/2) [sin(pi(1+omega)x) + sin(pi(1-omega)x)]."""
    wp, wm = np.pi * (1.0 + omega), np.pi * (1.0 - omega)
    return (1.0 + wp**2 * t**2 / 2.0) * np.sin(wp * x) + (
        1.0 + wm**2 * t**2 / 2.0
    ) * np.sin(wm * x)


@dataclass(frozen=True)
class DatasetSpec:
    family: str
    n_train: int
    n_test: int
    seed: int
    k_min: float = 4.0  # joint_k family only
    k_max: float = 5.0
    k_is_squared: bool = False  # draw k^2 directly instead of k

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown dataset family {self.family!r}")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigurationError("dataset sizes must be positive")


@dataclass
class Split:
    features: list  # natural-shape forcing data per instance
    raw_targets: np.ndarray  # (D, K) forward transforms before normalization
    k_values: np.ndarray | None
    truth: list  # SolutionField per instance (evaluation only)


@dataclass
class Dataset:
    spec: DatasetSpec
    train: Split
    test: Split
    resample_count: int = 0


def _truth_matrix(system: SpectralSystem, k: float | None) -> np.ndarray:
    if k is None:
        return system.matrix
    b, c = system.parametric_parts
    return b + (k * k) * c


def _solve_truth(system: SpectralSystem, rhs: np.ndarray, k: float | None) -> SolutionField:
    if k is None:
        return classical_solve(system, rhs)
    mat = _truth_matrix(system, k)
    alpha = np.linalg.solve(mat, rhs)
    from .spectral import reconstruct

    return SolutionField(coefficients=alpha, nodal_values=reconstruct(system, alpha))


def generate_dataset(spec: DatasetSpec, system: SpectralSystem) -> Dataset:
    """Sample forcing instances, forward-transform them, and solve for truth.

    Truth solutions never enter the loss; they are stored for evaluation. A
    forcing draw whose transform has vanishing norm is resampled and counted.
    """
    rng = np.random.default_rng(spec.seed)
    resamples = 0

    def draw_batch(count: int) -> Split:
        nonlocal resamples
        features, rows, ks, truths = [], [], [], []
        grids = system.grid()
        for _ in range(count):
            for _attempt in range(100):
                k_val = None
                if spec.family == "shallow_ry":
                    n = system.size.bit_length() - 1
                    if (1 << n) != system.size:
                        raise ConfigurationError("shallow family needs a power-of-two system")
                    theta = rng.uniform(0.0, 2.0 * np.pi, n)
                    raw = qsim.build_ry_embedding(theta).real.copy()
                    feat = raw.copy()
                elif spec.family == "trig_1d":
                    h1, h2, m1, m2 = rng.uniform(0.0, 1.0, 4)
                    feat = trig_forcing_1d(h1, m1, h2, m2, grids[0])
                    raw, _ = forward_transform(feat, system)
                elif spec.family == "trig_2d":
                    h1, h2, m1, m2 = rng.uniform(0.0, 1.0, 4)
                    x, y = np.meshgrid(grids[0], grids[1], indexing="ij")
                    feat = trig_forcing_2d(h1, m1, h2, m2, x, y)
                    raw, _ = forward_transform(feat, system)
                elif spec.family == "wave_family":
                    omega = rng.uniform(1.0, 2.0)
                    x, t = np.meshgrid(grids[0], grids[1], indexing="ij")
                    feat = wave_forcing(omega, x, t)
                    raw, _ = forward_transform(feat, system)
                elif spec.family == "joint_k":
                    if system.parametric_parts is None:
                        raise ConfigurationError("joint_k needs a parametric system")
                    drawn = rng.uniform(spec.k_min, spec.k_max)
                    k_val = float(np.sqrt(drawn)) if spec.k_is_squared else float(drawn)
                    h1, h2, m1, m2 = rng.uniform(0.0, 1.0, 4)
                    if system.direction_count == 1:
                        feat = trig_forcing_1d(h1, m1, h2, m2, grids[0])
                    else:
                        x, y = np.meshgrid(grids[0], grids[1], indexing="ij")
                        feat = trig_forcing_2d(h1, m1, h2, m2, x, y)
                    raw, _ = forward_transform(feat, system)
                else:  # pragma: no cover - guarded by DatasetSpec
                    raise ConfigurationError(spec.family)
                if np.linalg.norm(raw) > 1e-10:
                    break
                resamples += 1
            else:
                raise DivergenceError("could not draw a non-degenerate forcing in 100 tries")
            features.append(feat)
            rows.append(raw)
            ks.append(k_val)
            truths.append(_solve_truth(system, raw, k_val))
        k_arr = None if ks[0] is None else np.array(ks, dtype=float)
        return Split(features=features, raw_targets=np.array(rows), k_values=k_arr, truth=truths)

    train = draw_batch(spec.n_train)
    test = draw_batch(spec.n_test) if spec.n_test else Split([], np.zeros((0, system.size)), None, [])
    return Dataset(spec=spec, train=train, test=test, resample_count=resamples)


def feature_vector(split: Split, index: int, input_shape: tuple[int, ...]) -> np.ndarray:
    """Adapt stored forcing data to the network's input shape.

    Flat inputs get the flattened samples, with the instance coefficient k^2
    prepended for joint families; 3-axis inputs reshape a grid to (1, H, W).
    """
    natural = np.asarray(split.features[index], dtype=float)
    if len(input_shape) == 1:
        flat = natural.reshape(-1)
        if split.k_values is not None:
            flat = np.concatenate(([split.k_values[index] ** 2], flat))
        if flat.shape[0] != input_shape[0]:
            raise ContractViolation(
                f"instance features have length {flat.shape[0]}, network expects {input_shape[0]}"
            )
        return flat
    if natural.ndim != 2:
        raise ConfigurationError("grid input requested for non-grid features")
    if split.k_values is not None:
        raise ConfigurationError("joint coefficients require a flat feature vector")
    grid = natural[None, :, :]
    if grid.shape != input_shape:
        raise ContractViolation(f"grid {grid.shape} does not match input {input_shape}")
    return grid


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @staticmethod
    def for_params(params: list) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    state: AdamState,
    params: list,
    grads: list,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, in place on params."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in Adam step")
    state.t += 1
    b1t = 1.0 - beta1**state.t
    b2t = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + eps)
    return state


# ---------------------------------------------------------------------------
# L-BFGS (optional optimizer)


@dataclass
class LbfgsState:
    x: np.ndarray
    f: float
    g: np.ndarray
    s_hist: list = field(default_factory=list)
    y_hist: list = field(default_factory=list)
    m: int = 10
    events: list = field(default_factory=list)


def _two_loop_direction(state: LbfgsState) -> np.ndarray:
    q = state.g.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(state.s_hist, state.y_hist)]
    for s, y, rho in zip(reversed(state.s_hist), reversed(state.y_hist), reversed(rhos)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if state.y_hist:
        s, y = state.s_hist[-1], state.y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(state.s_hist, state.y_hist, rhos), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _strong_wolfe(closure, x, f0, g0, direction, c1=1e-4, c2=0.9, max_evals=25):
    """Bracket/zoom line search; returns (step, f, g) or None on failure."""
    d_dot_g0 = float(g0 @ direction)
    if d_dot_g0 >= 0:
        return None

    def phi(alpha):
        f, g = closure(x + alpha * direction)
        return f, g, float(g @ direction)

    def zoom(lo, f_lo, hi, f_hi, d_lo):
        for _ in range(max_evals):
            alpha = 0.5 * (lo + hi)
            f, g, d = phi(alpha)
            if f > f0 + c1 * alpha * d_dot_g0 or f >= f_lo:
                hi, f_hi = alpha, f
            else:
                if abs(d) <= -c2 * d_dot_g0:
                    return alpha, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, d_lo = alpha, f, d
            if abs(hi - lo) < 1e-16:
                break
        return None

    prev_alpha, prev_f, prev_d = 0.0, f0, d_dot_g0
    alpha = 1.0
    for _ in range(max_evals):
        f, g, d = phi(alpha)
        if f > f0 + c1 * alpha * d_dot_g0 or (prev_alpha > 0 and f >= prev_f):
            return zoom(prev_alpha, prev_f, alpha, f, prev_d)
        if abs(d) <= -c2 * d_dot_g0:
            return alpha, f, g
        if d >= 0:
            return zoom(alpha, f, prev_alpha, prev_f, d)
        prev_alpha, prev_f, prev_d = alpha, f, d
        alpha *= 2.0
    return None


def lbfgs_step(state: LbfgsState, closure) -> LbfgsState:
    """One quasi-Newton step with strong-Wolfe line search.

    A failed line search falls back to a small steepest-descent step and
    records the event. History length 0 degenerates to line-searched
    gradient descent.
    """
    direction = _two_loop_direction(state) if state.s_hist else -state.g
    result = _strong_wolfe(closure, state.x, state.f, state.g, direction)
    if result is None:
        state.events.append(f"line-search fallback at t={len(state.events)}")
        step = 1e-4 / max(1.0, float(np.linalg.norm(state.g)))
        x_new = state.x - step * state.g
        f_new, g_new = closure(x_new)
    else:
        alpha, f_new, g_new = result
        x_new = state.x + alpha * direction
    s = x_new - state.x
    y = g_new - state.g
    if state.m > 0 and float(s @ y) > 1e-14:
        state.s_hist.append(s)
        state.y_hist.append(y)
        if len(state.s_hist) > state.m:
            state.s_hist.pop(0)
            state.y_hist.pop(0)
    state.x, state.f, state.g = x_new, f_new, g_new
    return state


def lbfgs_minimize(closure, x0: np.ndarray, max_iter: int = 100, m: int = 10, gtol: float = 1e-12):
    f0, g0 = closure(np.asarray(x0, dtype=float))
    state = LbfgsState(x=np.asarray(x0, dtype=float).copy(), f=f0, g=g0, m=m)
    for _ in range(max_iter):
        if float(np.linalg.norm(state.g)) <= gtol:
            break
        state = lbfgs_step(state, closure)
    return state


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "unnormalized"  # unnormalized | normalized
    optimizer: str = "adam"  # adam | lbfgs
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 1000
    gradient_mode: str = "adjoint"  # adjoint | parameter_shift
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    test_loss: float
    train_rel_l2: float
    test_rel_l2: float
    test_rel_linf: float
    test_mae: float
    wall_seconds: float


@dataclass
class RunRecord:
    rows: list
    best_epoch: int
    best_test_rel_l2: float
    checkpoint_best: anglenet.NetworkState
    checkpoint_final: anglenet.NetworkState
    aborted: bool = False
    abort_reason: str = ""


@dataclass
class TrainData:
    ctx_train: loss_mod.LossContext
    ctx_test: loss_mod.LossContext
    train_features: list
    test_features: list
    train_truth: list
    test_truth: list

    @staticmethod
    def from_dataset(
        dataset: Dataset, system: SpectralSystem, input_shape: tuple[int, ...]
    ) -> "TrainData":
        ctx_train = loss_mod.context_for_system(
            system, dataset.train.raw_targets, k_values=dataset.train.k_values
        )
        ctx_test = loss_mod.with_targets(
            ctx_train, dataset.test.raw_targets, k_values=dataset.test.k_values
        )
        train_feats = [
            feature_vector(dataset.train, i, input_shape) for i in range(len(dataset.train.truth))
        ]
        test_feats = [
            feature_vector(dataset.test, i, input_shape) for i in range(len(dataset.test.truth))
        ]
        return TrainData(
            ctx_train=ctx_train,
            ctx_test=ctx_test,
            train_features=train_feats,
            test_features=test_feats,
            train_truth=dataset.train.truth,
            test_truth=dataset.test.truth,
        )


def _split_loss(ctx, states, objective):
    fn = loss_mod.loss_unnormalized if objective == "unnormalized" else loss_mod.loss_phase_aware
    return fn(ctx, states).total


def evaluate_split(ctx, program, net, features, truths, objective):
    """Loss plus solution-error metrics of one split under the current net."""
    import warnings as _warnings

    if not features:
        return {"loss": float("nan"), "rel_l2": float("nan"), "rel_linf": float("nan"), "mae": float("nan")}
    angles = np.stack([anglenet.forward(net, f) for f in features])
    states = qsim.run_batch(program, angles)
    total = _split_loss(ctx, states, objective)
    rel2, relinf, mae = [], [], []
    with _warnings.catch_warnings():
        # intermediate states legitimately carry phase residue; only final
        # recoveries should warn
        _warnings.simplefilter("ignore")
        for i, truth in enumerate(truths):
            rec = loss_mod.recover_solution(states[i], ctx, i)
            m = metrics(rec, truth, ctx.system)
            rel2.append(m["rel_l2"])
            relinf.append(m["rel_linf"])
            mae.append(m["mae"])
    return {
        "loss": total,
        "rel_l2": float(np.mean(rel2)),
        "rel_linf": float(np.mean(relinf)),
        "mae": float(np.mean(mae)),
        "per_instance_rel_l2": rel2,
        "per_instance_rel_linf": relinf,
        "per_instance_mae": mae,
    }


def _net_params(net: anglenet.NetworkState) -> list:
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def _flatten_grads(grads) -> list:
    out = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out


def train(
    config: TrainConfig,
    data: TrainData,
    program: qsim.GateProgram,
    net: anglenet.NetworkState,
) -> RunRecord:
    """Full-batch training with periodic evaluation against the oracle.

    Checkpoints the network at the best test relative-L2 error; aborts with a
    partial record if the loss diverges past 1e6 or turns non-finite.
    """
    start = time.perf_counter()
    rows: list[EpochRow] = []
    best = (np.inf, 0, net.copy())  # (test rel L2, epoch, snapshot)
    aborted, reason = False, ""

    params = _net_params(net)
    adam = AdamState.for_params(params)

    def record(epoch: int) -> None:
        nonlocal best
        tr = evaluate_split(
            data.ctx_train, program, net, data.train_features, data.train_truth, config.objective
        )
        te = evaluate_split(
            data.ctx_test, program, net, data.test_features, data.test_truth, config.objective
        )
        rows.append(
            EpochRow(
                epoch=epoch,
                train_loss=tr["loss"],
                test_loss=te["loss"],
                train_rel_l2=tr["rel_l2"],
                test_rel_l2=te["rel_l2"],
                test_rel_linf=te["rel_linf"],
                test_mae=te["mae"],
                wall_seconds=time.perf_counter() - start,
            )
        )
        score = te["rel_l2"] if np.isfinite(te["rel_l2"]) else tr["rel_l2"]
        if score < best[0]:
            best = (score, epoch, net.copy())

    if config.optimizer == "lbfgs":
        shapes = [p.shape for p in params]

        def pack() -> np.ndarray:
            return np.concatenate([p.reshape(-1) for p in params])

        def unpack(x: np.ndarray) -> None:
            off = 0
            for p, shape in zip(params, shapes):
                size = int(np.prod(shape))
                p[...] = x[off : off + size].reshape(shape)
                off += size

        def closure(x: np.ndarray):
            unpack(x)
            grads, value = loss_mod.grad_total(
                data.ctx_train,
                program,
                net,
                data.train_features,
                objective=config.objective,
                gradient_mode=config.gradient_mode,
            )
            flat = np.concatenate([g.reshape(-1) for g in _flatten_grads(grads)])
            return value.total, flat

        f0, g0 = closure(pack())
        state = LbfgsState(x=pack(), f=f0, g=g0, m=10)
        for epoch in range(1, config.epochs + 1):
            state = lbfgs_step(state, closure)
            unpack(state.x)
            if not np.isfinite(state.f) or state.f > 1e6:
                aborted, reason = True, f"loss diverged to {state.f:.3e} at epoch {epoch}"
                break
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                record(epoch)
    else:
        for epoch in range(1, config.epochs + 1):
            try:
                grads, value = loss_mod.grad_total(
                    data.ctx_train,
                    program,
                    net,
                    data.train_features,
                    objective=config.objective,
                    gradient_mode=config.gradient_mode,
                )
                if not np.isfinite(value.total) or value.total > 1e6:
                    raise DivergenceError(f"loss diverged to {value.total:.3e}")
                adam_step(
                    adam,
                    params,
                    _flatten_grads(grads),
                    lr=config.learning_rate,
                    beta1=config.beta1,
                    beta2=config.beta2,
                    eps=config.epsilon,
                )
            except DivergenceError as err:
                aborted, reason = True, f"{err} at epoch {epoch}"
                break
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                record(epoch)

    if not rows:
        record(0)
    return RunRecord(
        rows=rows,
        best_epoch=best[1],
        best_test_rel_l2=float(best[0]),
        checkpoint_best=best[2],
        checkpoint_final=net.copy(),
        aborted=aborted,
        abort_reason=reason,
    )


_RUN_COLUMNS = (
    "epoch",
    "train_loss",
    "test_loss",
    "train_rel_l2",
    "test_rel_l2",
    "test_rel_linf",
    "test_mae",
    "wall_seconds",
)


def write_run_record(record: RunRecord, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RUN_COLUMNS)
        for row in record.rows:
            writer.writerow(
                [row.epoch]
                + [
                    f"{getattr(row, col):.17g}"
                    for col in _RUN_COLUMNS[1:]
                ]
            )


def read_run_record(path) -> list[EpochRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != _RUN_COLUMNS:
            raise ContractViolation(f"unexpected run record columns: {reader.fieldnames}")
        for entry in reader:
            rows.append(
                EpochRow(
                    epoch=int(entry["epoch"]),
                    **{k: float(entry[k]) for k in _RUN_COLUMNS[1:]},
                )
            )
    return rows
