"""Gradient-based attacks behind one interface.

Three families:

* the sign-gradient projected family (FGSM, PGD with either loss,
  MultiTargeted restarts, ODI-initialized restarts, and auto-step-size
  APGD on cross-entropy),
* the original CW-L2 attack with its global tanh box substitution and a
  selectable starting point,
* an L-inf attack that reparameterizes each pixel's feasible interval
  through tanh so the optimization is unconstrained and no projection is
  ever needed.

All attacks are pure functions of (model, example, config, seed): identical
seeds give identical outcomes, restart randomness is keyed by
(seed, example_key, restart_index), and every returned candidate lies inside
the unit box and, for the L-inf family, inside the declared epsilon-ball.
Each public operation accepts a single (d,) example or an (n, d) batch; a
batch returns one outcome per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._validation import ValidationError, as_matrix, check_positive
from .losses import ce_loss_onehot, margin_loss
from .network import Model, _backward_cached, _forward_cached

NORMS = ("linf", "l2")
INITS = ("original", "random_in_ball", "odi")
LOSSES = ("cross_entropy", "margin", "targeted_margin", "logit_dot")

_TANH_SAT = 20.0


@dataclass(frozen=True)
class AttackConfig:
    """Knobs for the projected sign-gradient family."""

    eps: float
    norm: str = "linf"
    steps: int = 20
    step_size: float | None = None      # None -> 2*eps/steps
    restarts: int = 1
    init: str = "random_in_ball"
    loss: str = "cross_entropy"
    target_class: int | None = None     # for loss="targeted_margin"
    direction: np.ndarray | None = None  # for loss="logit_dot"
    odi_steps: int = 2
    odi_step_size: float | None = None  # None -> eps
    step_size_mode: str = "fixed"
    rng_seed: int = 0

    def __post_init__(self):
        check_positive(self.eps, "eps")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.norm not in NORMS:
            raise ValidationError(f"unknown norm {self.norm!r}")
        if self.init == "zero_image":
            raise ValidationError(
                "zero_image start is a CW-L2 option; use CWConfig.starting_point"
            )
        if self.init not in INITS:
            raise ValidationError(f"unknown init {self.init!r}")
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.loss == "targeted_margin" and self.target_class is None:
            raise ValidationError("targeted_margin needs target_class")
        if self.loss == "logit_dot" and self.direction is None:
            raise ValidationError("logit_dot needs a direction vector")
        if self.step_size_mode not in ("fixed", "auto"):
            raise ValidationError(f"unknown step_size_mode {self.step_size_mode!r}")

    @property
    def effective_step_size(self) -> float:
        return 2.0 * self.eps / self.steps if self.step_size is None else self.step_size

    @property
    def effective_odi_step(self) -> float:
        return self.eps if self.odi_step_size is None else self.odi_step_size


@dataclass(frozen=True)
class CWConfig:
    """Knobs for the original CW-L2 attack (Lagrangian form, tanh box).

    The starting image is nudged into the tanh's responsive range (pixels
    clipped to [0.02, 0.98] before the inverse substitution); exactly 0 or 1
    would park the optimizer on a saturated plateau where plain gradient
    descent cannot move.
    """

    c: float = 0.1
    kappa: float = 0.0
    steps: int = 1000
    learning_rate: float = 0.1
    starting_point: str = "zero_image"
    eps: float = 1.5    # L2 budget used only for post-hoc success accounting

    def __post_init__(self):
        check_positive(self.c, "c")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        check_positive(self.learning_rate, "learning_rate")
        if self.starting_point not in ("zero_image", "original"):
            raise ValidationError(
                f"unknown starting_point {self.starting_point!r}"
            )
        check_positive(self.eps, "eps")


@dataclass
class AttackOutcome:
    """Result of attacking one example."""

    x_adv: np.ndarray
    success: bool
    norm: float
    best_loss: float
    loss_trace: np.ndarray
    restarts_used: int
    within_budget: bool = True
    zero_gradient: bool = False
    tanh_saturated: bool = False


def project_ball(x, x_orig, eps: float, p: str = "linf") -> np.ndarray:
    """Project onto the eps-ball around ``x_orig`` intersected with [0,1]^n.

    L-inf: coordinate-wise clamping, which is the exact nearest point.
    L2: rescale the offset onto the ball, then clamp to the box (the clamp
    never re-inflates the offset, so the operation is idempotent).
    """
    if p not in NORMS:
        raise ValidationError(f"unknown norm {p!r}")
    check_positive(eps, "eps", strict=False)
    X = np.asarray(x, dtype=np.float64)
    O = np.asarray(x_orig, dtype=np.float64)
    if X.shape != O.shape:
        raise ValidationError(f"shape mismatch: {X.shape} vs {O.shape}")
    if p == "linf":
        out = np.clip(X, O - eps, O + eps)
    else:
        delta = X - O
        flat = delta.reshape(-1, delta.shape[-1]) if delta.ndim > 1 else delta[None]
        norms = np.sqrt((flat ** 2).sum(axis=1))
        factor = np.minimum(1.0, eps / np.maximum(norms, 1e-300))
        out = O + (flat * factor[:, None]).reshape(delta.shape)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# shared machinery


def _prep(model, x, t):
    single = np.asarray(x).ndim == 1
    X = as_matrix(x, "x", n_cols=model.input_dim)
    T = np.asarray(t)
    if T.ndim == 0:
        T = np.full(X.shape[0], int(T))
    T = T.astype(np.int64)
    if T.shape != (X.shape[0],):
        raise ValidationError("labels do not match batch size")
    if T.size and (T.min() < 0 or T.max() >= model.num_classes):
        raise ValidationError("target class out of range")
    return X, T, single


def _opt_loss_and_gz(Z, T, loss, target=None, direction=None):
    n, K = Z.shape
    rows = np.arange(n)
    if loss == "cross_entropy":
        return ce_loss_onehot(Z, T)
    if loss == "margin":
        return margin_loss(Z, T)
    if loss == "targeted_margin":
        j = np.broadcast_to(np.asarray(target, dtype=np.int64), (n,))
        if np.any(j == T):
            raise ValidationError("targeted_margin target equals true class")
        val = Z[rows, j] - Z[rows, T]
        g = np.zeros_like(Z)
        g[rows, j] += 1.0
        g[rows, T] -= 1.0
        return val, g
    d = np.asarray(direction, dtype=np.float64)
    if d.shape == (K,):
        d = np.broadcast_to(d, Z.shape)
    return (Z * d).sum(axis=1), np.array(d, dtype=np.float64, copy=True)


def _eval_point(model, X, T, loss, target, direction, track_margin, need_grad=True):
    """Loss/selection-loss/gradient/prediction at a batch of points."""
    pres, acts = _forward_cached(model.layers, X)
    Z = acts[-1]
    opt, gz = _opt_loss_and_gz(Z, T, loss, target, direction)
    if track_margin and loss != "margin":
        sel, _ = margin_loss(Z, T)
    else:
        sel = opt
    pred = np.argmax(Z, axis=1)
    if not need_grad:
        return opt, sel, None, pred
    _, gx = _backward_cached(model.layers, pres, acts, gz)
    return opt, sel, gx, pred


class _Best:
    """Per-example best-iterate bookkeeping across steps and restarts."""

    def __init__(self, X, T):
        n = X.shape[0]
        self.T = T
        self.best_loss = np.full(n, -np.inf)
        self.best_x = X.copy()
        self.has_succ = np.zeros(n, dtype=bool)
        self.best_succ_loss = np.full(n, -np.inf)
        self.best_succ_x = X.copy()
        self.traces = []

    def update(self, Xc, sel_loss, pred):
        self.traces.append(np.array(sel_loss, dtype=np.float64, copy=True))
        gain = sel_loss > self.best_loss
        if np.any(gain):
            self.best_loss[gain] = sel_loss[gain]
            self.best_x[gain] = Xc[gain]
        miss = (pred != self.T) & (sel_loss > self.best_succ_loss)
        if np.any(miss):
            self.has_succ[miss] = True
            self.best_succ_loss[miss] = sel_loss[miss]
            self.best_succ_x[miss] = Xc[miss]

    def outcomes(self, x_orig, norm, restarts, zero_grad):
        traces = np.stack(self.traces, axis=0)  # (n_evals, n)
        out = []
        for i in range(x_orig.shape[0]):
            x_adv = (self.best_succ_x[i] if self.has_succ[i]
                     else self.best_x[i]).copy()
            delta = x_adv - x_orig[i]
            achieved = (float(np.abs(delta).max()) if norm == "linf"
                        else float(np.sqrt((delta ** 2).sum())))
            out.append(AttackOutcome(
                x_adv=x_adv,
                success=bool(self.has_succ[i]),
                norm=achieved,
                best_loss=float(self.best_loss[i]),
                loss_trace=traces[:, i].copy(),
                restarts_used=restarts,
                zero_gradient=bool(zero_grad[i]),
            ))
        return out


def _per_example_rngs(seed, keys, restart):
    return [np.random.default_rng((int(seed), int(k), int(restart)))
            for k in keys]


def _random_ball_start(X, eps, norm, rngs):
    n, d = X.shape
    start = np.empty_like(X)
    for i, rng in enumerate(rngs):
        if norm == "linf":
            start[i] = X[i] + rng.uniform(-eps, eps, size=d)
        else:
            u = rng.standard_normal(d)
            radius = eps * rng.uniform() ** (1.0 / d)
            start[i] = X[i] + radius * u / max(np.sqrt((u ** 2).sum()), 1e-300)
    return project_ball(start, X, eps, norm)


def _odi_start(model, X, eps, norm, odi_steps, odi_step, rngs):
    n = X.shape[0]
    K = model.num_classes
    D = np.empty((n, K))
    for i, rng in enumerate(rngs):
        D[i] = rng.uniform(-1.0, 1.0, size=K)
    x = X.copy()
    for _ in range(odi_steps):
        pres, acts = _forward_cached(model.layers, x)
        _, gx = _backward_cached(model.layers, pres, acts, D)
        x = project_ball(x + odi_step * np.sign(gx), X, eps, norm)
    return x


def odi_init(model: Model, x, eps: float, n_odi_steps: int,
             odi_step: float, seed: int = 0) -> np.ndarray:
    """Output-diversified starting point: ascend a random logit direction.

    Draws d uniform in [-1,1]^K, takes ``n_odi_steps`` sign-gradient steps of
    size ``odi_step`` on d . f(x), projecting to the ball each step.
    ``n_odi_steps=0`` returns the original point.
    """
    check_positive(eps, "eps")
    if n_odi_steps < 0:
        raise ValidationError("n_odi_steps must be >= 0")
    single = np.asarray(x).ndim == 1
    X = as_matrix(x, "x", n_cols=model.input_dim)
    if n_odi_steps == 0:
        return X[0].copy() if single else X.copy()
    rngs = _per_example_rngs(seed, np.arange(X.shape[0]), 0)
    start = _odi_start(model, X, eps, "linf", n_odi_steps, odi_step, rngs)
    return start[0] if single else start


def _step_direction(gx, norm):
    if norm == "linf":
        return np.sign(gx)
    scale = np.sqrt((gx ** 2).sum(axis=1, keepdims=True))
    return gx / np.maximum(scale, 1e-300)


def _pgd_engine(model, X, T, *, eps, steps, step_size, restarts, init, norm,
                loss, rng_seed, example_keys=None, target=None, direction=None,
                odi_steps=2, odi_step=None, track_margin=False):
    """Batched projected sign-gradient loop with restart bookkeeping."""
    keys = np.arange(X.shape[0]) if example_keys is None else np.asarray(example_keys)
    best = _Best(X, T)
    zero_grad = np.zeros(X.shape[0], dtype=bool)
    for r in range(restarts):
        if init == "original" or eps == 0.0:
            x = X.copy()
        elif init == "random_in_ball":
            x = _random_ball_start(X, eps, norm, _per_example_rngs(rng_seed, keys, r))
        else:  # odi
            x = _odi_start(model, X, eps, norm, odi_steps,
                           eps if odi_step is None else odi_step,
                           _per_example_rngs(rng_seed, keys, r))
        step_target = target[r] if isinstance(target, list) else target
        for k in range(steps):
            opt, sel, gx, pred = _eval_point(
                model, x, T, loss, step_target, direction, track_margin)
            if r == 0 and k == 0:
                zero_grad = ~np.any(gx != 0.0, axis=1)
            best.update(x, sel, pred)
            x = project_ball(x + step_size * _step_direction(gx, norm), X, eps, norm)
        _, sel, _, pred = _eval_point(
            model, x, T, loss, step_target, direction, track_margin, need_grad=False)
        best.update(x, sel, pred)
    return best.outcomes(X, norm, restarts, zero_grad)


# ---------------------------------------------------------------------------
# public attack operations


def _unwrap(outcomes, single):
    return outcomes[0] if single else outcomes


def fgsm(model: Model, x, t, eps: float):
    """One sign-gradient step of size 2*eps from the original point, then
    projection back to the eps-ball and the unit box. ``eps=0`` is allowed
    and returns the original point."""
    check_positive(eps, "eps", strict=False)
    X, T, single = _prep(model, x, t)
    outcomes = _pgd_engine(
        model, X, T, eps=eps, steps=1, step_size=2.0 * eps, restarts=1,
        init="original", norm="linf", loss="cross_entropy", rng_seed=0)
    return _unwrap(outcomes, single)


def pgd(model: Model, x, t, cfg: AttackConfig):
    """Projected sign-gradient ascent per ``cfg``; the best-loss iterate over
    all steps and restarts is kept, preferring misclassifying iterates."""
    X, T, single = _prep(model, x, t)
    outcomes = _pgd_engine(
        model, X, T, eps=cfg.eps, steps=cfg.steps,
        step_size=cfg.effective_step_size, restarts=cfg.restarts,
        init=cfg.init, norm=cfg.norm, loss=cfg.loss, rng_seed=cfg.rng_seed,
        target=cfg.target_class, direction=cfg.direction,
        odi_steps=cfg.odi_steps, odi_step=cfg.effective_odi_step)
    return _unwrap(outcomes, single)


def pgd_cw(model: Model, x, t, cfg: AttackConfig):
    """PGD with the margin loss (the PGD-CW variant)."""
    return pgd(model, x, t, replace(cfg, loss="margin",
                                    target_class=None, direction=None))


def _mt_engine(model, X, T, cfg, example_keys=None):
    K = model.num_classes
    if K < 2:
        raise ValidationError("multitargeted needs at least 2 classes")
    # Per-restart, per-example wrong class: cycle each example's non-target
    # classes in ascending order.
    non_targets = np.argsort(np.where(
        np.arange(K)[None, :] == T[:, None], K + 1, np.arange(K)[None, :]),
        axis=1)[:, :K - 1]
    targets = [non_targets[:, r % (K - 1)] for r in range(cfg.restarts)]
    return _pgd_engine(
        model, X, T, eps=cfg.eps, steps=cfg.steps,
        step_size=cfg.effective_step_size, restarts=cfg.restarts,
        init=cfg.init, norm=cfg.norm, loss="targeted_margin",
        rng_seed=cfg.rng_seed, example_keys=example_keys,
        target=targets, track_margin=True)


def multitargeted(model: Model, x, t, cfg: AttackConfig):
    """Restarts cycle over every wrong class, each maximizing z_j - z_t.

    The returned candidate is the best across restarts measured by the
    untargeted margin loss, so per-target runs stay comparable. Whatever
    ``cfg.loss`` says, each restart optimizes its own targeted margin.
    """
    X, T, single = _prep(model, x, t)
    return _unwrap(_mt_engine(model, X, T, cfg), single)


def apgd_ce(model: Model, x, t, cfg: AttackConfig, example_keys=None):
    """Budget-aware PGD on cross-entropy with automatic step-size halving.

    Starts at step size 2*eps. At checkpoints every ceil(steps/10) steps the
    step size is halved (and the iterate reset to the best so far) for
    examples whose fraction of non-decreasing loss steps since the last
    checkpoint fell below 0.75; a plateau at the optimum therefore never
    triggers halving. Steps blend in 0.25 of the previous displacement.
    """
    if cfg.step_size_mode != "auto":
        raise ValidationError("apgd_ce requires step_size_mode='auto'")
    X, T, single = _prep(model, x, t)
    keys = np.arange(X.shape[0]) if example_keys is None else np.asarray(example_keys)
    eps, steps = cfg.eps, cfg.steps
    checkpoint = max(1, math.ceil(steps / 10))
    best = _Best(X, T)
    zero_grad = np.zeros(X.shape[0], dtype=bool)
    for r in range(cfg.restarts):
        if cfg.init == "original":
            x_cur = X.copy()
        else:
            x_cur = _random_ball_start(X, eps, cfg.norm,
                                       _per_example_rngs(cfg.rng_seed, keys, r))
        eta = np.full(X.shape[0], 2.0 * eps)
        opt, sel, gx, pred = _eval_point(model, x_cur, T, "cross_entropy",
                                         None, None, False)
        if r == 0:
            zero_grad = ~np.any(gx != 0.0, axis=1)
        best.update(x_cur, sel, pred)
        x_prev = x_cur.copy()
        rising = np.zeros(X.shape[0])
        window = 0
        for k in range(1, steps + 1):
            z = project_ball(x_cur + eta[:, None] * np.sign(gx), X, eps, cfg.norm)
            if k == 1:
                x_new = z
            else:
                x_new = project_ball(
                    x_cur + 0.75 * (z - x_cur) + 0.25 * (x_cur - x_prev),
                    X, eps, cfg.norm)
            opt_new, sel_new, gx_new, pred = _eval_point(
                model, x_new, T, "cross_entropy", None, None, False)
            best.update(x_new, sel_new, pred)
            rising += (opt_new >= opt)
            window += 1
            x_prev, x_cur, opt, gx = x_cur, x_new, opt_new, gx_new
            if k % checkpoint == 0 and k < steps:
                halve = rising / window < 0.75
                if np.any(halve):
                    eta[halve] *= 0.5
                    x_cur[halve] = best.best_x[halve]
                    x_prev[halve] = x_cur[halve]
                    opt, _, gx, _ = _eval_point(
                        model, x_cur, T, "cross_entropy", None, None, False)
                rising[:] = 0.0
                window = 0
    return _unwrap(best.outcomes(X, cfg.norm, cfg.restarts, zero_grad), single)


def cw_l2(model: Model, x, t, cw: CWConfig):
    """Original CW-L2: minimize ||delta||_2 + c * max(z_t - max_{i!=t} z_i, -kappa)
    over w with x + delta = (tanh(w)+1)/2, by plain gradient descent.

    Returns the lowest-norm misclassifying iterate if one was found, else the
    lowest-objective iterate. ``within_budget`` records whether the achieved
    L2 norm fits the configured budget (the attack itself is unconstrained).
    """
    X, T, single = _prep(model, x, t)
    n, d = X.shape
    rows = np.arange(n)
    a0 = np.zeros_like(X) if cw.starting_point == "zero_image" else X
    w = np.arctanh(2.0 * np.clip(a0, 0.02, 0.98) - 1.0)

    best_obj = np.full(n, np.inf)
    best_obj_x = X.copy()
    has_succ = np.zeros(n, dtype=bool)
    best_succ_norm = np.full(n, np.inf)
    best_succ_x = X.copy()
    traces = []
    zero_grad = np.zeros(n, dtype=bool)
    saturated = np.zeros(n, dtype=bool)

    def consider(a, obj, norms, pred):
        traces.append(obj.copy())
        gain = obj < best_obj
        best_obj[gain] = obj[gain]
        best_obj_x[gain] = a[gain]
        miss = (pred != T) & (norms < best_succ_norm)
        has_succ[miss] = True
        best_succ_norm[miss] = norms[miss]
        best_succ_x[miss] = a[miss]

    for k in range(cw.steps + 1):
        th = np.tanh(w)
        a = 0.5 * (th + 1.0)
        pres, acts = _forward_cached(model.layers, a)
        Z = acts[-1]
        masked = Z.copy()
        masked[rows, T] = -np.inf
        runner = np.argmax(masked, axis=1)
        margin_ct = Z[rows, T] - Z[rows, runner]
        delta = a - X
        norms = np.sqrt((delta ** 2).sum(axis=1))
        obj = norms + cw.c * np.maximum(margin_ct, -cw.kappa)
        consider(a, obj, norms, np.argmax(Z, axis=1))
        if k == cw.steps:
            break
        gz = np.zeros_like(Z)
        active = margin_ct > -cw.kappa
        gz[rows, T] = np.where(active, 1.0, 0.0)
        gz[rows, runner] -= np.where(active, 1.0, 0.0)
        _, gx = _backward_cached(model.layers, pres, acts, gz)
        grad_a = delta / np.maximum(norms, 1e-12)[:, None] + cw.c * gx
        if k == 0:
            zero_grad = ~np.any(grad_a != 0.0, axis=1)
        w -= cw.learning_rate * grad_a * 0.5 * (1.0 - th ** 2)
        saturated |= np.any(np.abs(w) > _TANH_SAT, axis=1)

    trace = np.stack(traces, axis=0)
    outcomes = []
    for i in range(n):
        x_adv = (best_succ_x[i] if has_succ[i] else best_obj_x[i]).copy()
        achieved = float(np.sqrt(((x_adv - X[i]) ** 2).sum()))
        outcomes.append(AttackOutcome(
            x_adv=x_adv,
            success=bool(has_succ[i]),
            norm=achieved,
            best_loss=float(-best_obj[i]),
            loss_trace=trace[:, i].copy(),
            restarts_used=1,
            within_budget=bool(achieved <= cw.eps + 1e-9),
            zero_gradient=bool(zero_grad[i]),
            tanh_saturated=bool(saturated[i]),
        ))
    return _unwrap(outcomes, single)


def _ours_engine(model, X, T, eps, steps, step_size, snapshot_steps=None):
    """Tanh-interval L-inf attack; optionally records the keep-best state
    after selected step counts (a k-step run is a prefix of a longer run)."""
    n, d = X.shape
    lo = np.maximum(X - eps, 0.0)
    hi = np.minimum(X + eps, 1.0)
    span = hi - lo
    w = np.zeros_like(X)

    pres, acts = _forward_cached(model.layers, X)
    l0, _ = margin_loss(acts[-1], T)
    pred0 = np.argmax(acts[-1], axis=1)
    best_l = l0.copy()
    best_x = X.copy()
    best_miss = pred0 != T

    zero_grad = np.zeros(n, dtype=bool)
    saturated = np.zeros(n, dtype=bool)
    traces = []
    snapshots = {}
    want = set(int(s) for s in (snapshot_steps or ()))

    def consider(a, loss, pred):
        traces.append(loss.copy())
        gain = loss > best_l
        best_l[gain] = loss[gain]
        best_x[gain] = a[gain]
        best_miss[gain] = pred[gain] != T[gain]

    def snap():
        return (best_x.copy(), best_l.copy(), best_miss.copy())

    for k in range(steps + 1):
        th = np.tanh(w)
        a = lo + span * (0.5 * (th + 1.0))
        # guard against last-ulp rounding; mathematically a no-op
        np.minimum(a, hi, out=a)
        np.maximum(a, lo, out=a)
        pres, acts = _forward_cached(model.layers, a)
        loss, _ = margin_loss(acts[-1], T)
        pred = np.argmax(acts[-1], axis=1)
        consider(a, loss, pred)
        if k in want:
            snapshots[k] = snap()
        if k == steps:
            break
        # The descended objective is the negative cross-entropy: it is
        # smooth, so plain gradient descent on w cannot stall on the margin
        # loss's runner-up switches; the kept iterate is still the one with
        # the largest margin loss.
        _, gz = ce_loss_onehot(acts[-1], T)
        _, gx = _backward_cached(model.layers, pres, acts, gz)
        if k == 0:
            zero_grad = ~np.any(gx != 0.0, axis=1)
        w += step_size * gx * span * 0.5 * (1.0 - th ** 2)
        saturated |= np.any(np.abs(w) > _TANH_SAT, axis=1)

    trace = np.stack(traces, axis=0)

    def build(state):
        xs, ls, miss = state
        out = []
        for i in range(n):
            x_adv = xs[i].copy()
            out.append(AttackOutcome(
                x_adv=x_adv,
                success=bool(miss[i]),
                norm=float(np.abs(x_adv - X[i]).max()),
                best_loss=float(ls[i]),
                loss_trace=trace[:, i].copy(),
                restarts_used=1,
                zero_gradient=bool(zero_grad[i]),
                tanh_saturated=bool(saturated[i]),
            ))
        return out

    return build(snap()), {k: build(v) for k, v in snapshots.items()}


def our_linf_attack(model: Model, x, t, eps: float, steps: int = 500,
                    step_size: float = 0.1):
    """Tanh-interval L-inf attack.

    Every pixel's feasible interval [max(x-eps,0), min(x+eps,1)] is mapped
    through a scaled tanh of an unconstrained variable w (initialized to 0,
    i.e. the interval midpoint), and w is driven by plain gradient descent on
    the negative cross-entropy attack objective. The iterate with the largest
    margin loss is kept; every iterate is feasible by construction, so no
    projection exists anywhere on this path. Saturated tanh values (|w| > 20)
    are flagged.
    """
    check_positive(eps, "eps")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    check_positive(step_size, "step_size")
    X, T, single = _prep(model, x, t)
    outcomes, _ = _ours_engine(model, X, T, eps, steps, step_size)
    return _unwrap(outcomes, single)


# ---------------------------------------------------------------------------
# presets (Table-style names) and a uniform runnable wrapper


class Attack:
    """A named, fully-configured attack that can run on example batches."""

    def __init__(self, name: str, kind: str, config):
        self.name = name
        self.kind = kind
        self.config = config

    def describe(self) -> dict:
        cfg = self.config
        if isinstance(cfg, (AttackConfig, CWConfig)):
            params = {k: v for k, v in vars(cfg).items() if v is not None}
            params.pop("direction", None)
        else:
            params = dict(cfg)
        return {"name": self.name, "kind": self.kind, "params": params}

    def run_batch(self, model: Model, X, T, example_keys=None):
        X, T, _ = _prep(model, X, T)
        if self.kind == "fgsm":
            return _pgd_engine(
                model, X, T, eps=self.config["eps"], steps=1,
                step_size=2.0 * self.config["eps"], restarts=1,
                init="original", norm="linf", loss="cross_entropy",
                rng_seed=0, example_keys=example_keys)
        if self.kind == "pgd":
            cfg = self.config
            return _pgd_engine(
                model, X, T, eps=cfg.eps, steps=cfg.steps,
                step_size=cfg.effective_step_size, restarts=cfg.restarts,
                init=cfg.init, norm=cfg.norm, loss=cfg.loss,
                rng_seed=cfg.rng_seed, example_keys=example_keys,
                target=cfg.target_class, direction=cfg.direction,
                odi_steps=cfg.odi_steps, odi_step=cfg.effective_odi_step)
        if self.kind == "mt":
            return _mt_engine(model, X, T, self.config, example_keys)
        if self.kind == "apgd":
            return apgd_ce(model, X, T, self.config, example_keys)
        if self.kind == "cw":
            return cw_l2(model, X, T, self.config)
        if self.kind == "ours":
            c = self.config
            return our_linf_attack(model, X, T, c["eps"], c["steps"],
                                   c["step_size"])
        raise ValidationError(f"unknown attack kind {self.kind!r}")

    def run(self, model: Model, x, t) -> AttackOutcome:
        return self.run_batch(model, np.asarray(x)[None, :], [int(t)])[0]


PRESET_NAMES = ("fgsm", "pgd10", "pgd20", "pgd40", "pgd-cw", "mt", "odi",
                "apgd-ce", "cw", "cw-orig", "ours")


def make_attack(name: str, eps: float, seed: int = 0, **overrides) -> Attack:
    """Build a preset attack. Names mirror the evaluation tables: fgsm,
    pgd10/pgd20/pgd40, pgd-cw, mt, odi, apgd-ce, cw, cw-orig, ours."""
    name = name.lower()
    if name == "fgsm":
        check_positive(eps, "eps", strict=False)
        return Attack("fgsm", "fgsm", {"eps": eps})
    if name.startswith("pgd") and name[3:].isdigit():
        k = int(name[3:])
        cfg = AttackConfig(eps=eps, steps=k, step_size=2.0 * eps / k,
                           restarts=1, init="random_in_ball",
                           loss="cross_entropy", rng_seed=seed, **overrides)
        return Attack(name, "pgd", cfg)
    if name == "pgd-cw":
        cfg = AttackConfig(eps=eps, steps=20, step_size=eps / 10.0,
                           restarts=1, init="random_in_ball", loss="margin",
                           rng_seed=seed, **overrides)
        return Attack(name, "pgd", cfg)
    if name == "mt":
        # restarts cycle the wrong classes; cfg.loss is overridden per restart
        cfg = AttackConfig(eps=eps, steps=20, step_size=eps / 10.0,
                           restarts=18, init="random_in_ball", loss="margin",
                           rng_seed=seed, **overrides)
        return Attack(name, "mt", cfg)
    if name == "odi":
        cfg = AttackConfig(eps=eps, steps=20, step_size=eps / 10.0,
                           restarts=20, init="odi", loss="margin",
                           rng_seed=seed, **overrides)
        return Attack(name, "pgd", cfg)
    if name == "apgd-ce":
        cfg = AttackConfig(eps=eps, steps=100, restarts=1,
                           init="random_in_ball", loss="cross_entropy",
                           step_size_mode="auto", rng_seed=seed, **overrides)
        return Attack(name, "apgd", cfg)
    if name in ("cw", "cw-orig"):
        start = "zero_image" if name == "cw" else "original"
        params = {"starting_point": start}
        params.update(overrides)
        return Attack(name, "cw", CWConfig(eps=eps, **params))
    if name == "ours":
        params = {"eps": eps, "steps": 500, "step_size": 0.1}
        params.update(overrides)
        return Attack(name, "ours", params)
    raise ValidationError(
        f"unknown attack {name!r}; presets: {', '.join(PRESET_NAMES)}"
    )
