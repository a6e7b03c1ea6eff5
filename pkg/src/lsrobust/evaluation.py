"""Dataset-level robustness evaluation, transfer tests, sweeps and oracles.

Conventions: accuracies are percentages in [0, 100]; an example counts as
robust only if it is classified correctly clean AND survives the attack, so
robust accuracy can never exceed natural accuracy. An attack "breaks" an
example when the evaluated model mislabels the returned candidate and the
candidate is within the declared budget (always true for the L-inf family,
tracked separately for CW-L2). Any box/ball feasibility violation is an
invariant breach and raises; it is never folded into a metric.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import ValidationError
from .attacks import Attack, AttackOutcome, _ours_engine, make_attack
from .data import Dataset
from .network import Model, forward, predict
from .training import TrainConfig, train

SCHEMA_VERSION = 1


class FeasibilityError(RuntimeError):
    """An attack returned an infeasible candidate (invariant breach)."""


@dataclass
class ExampleRecord:
    index: int
    label: int
    clean_pred: int
    clean_correct: bool
    adv_pred: int
    attack_success: bool
    within_budget: bool
    norm: float
    best_loss: float
    survived: bool


@dataclass
class EvalReport:
    model_id: str
    model_meta: dict
    attack: dict
    natural_accuracy: float
    robust_accuracy: float
    n_examples: int
    seed: int
    wall_time_s: float
    per_example: list = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 <= self.robust_accuracy <= 100.0
                and 0.0 <= self.natural_accuracy <= 100.0):
            raise ValidationError("accuracies must be percentages in [0, 100]")
        if self.robust_accuracy > self.natural_accuracy + 1e-9:
            raise ValidationError("robust accuracy exceeds natural accuracy")


@dataclass
class TransferReport:
    source_id: str
    target_id: str
    attack: dict
    transfer_robust_accuracy: float
    natural_accuracy: float
    n_examples: int
    seed: int


def _chunk_task(args):
    model, attack, X, T, keys = args
    return attack.run_batch(model, X, T, example_keys=keys)


def _run_attack_chunks(craft_model, attack: Attack, dataset: Dataset,
                       batch_size: int, workers: int):
    n = len(dataset)
    chunks = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    tasks = [(craft_model, attack, dataset.X[s:e], dataset.y[s:e],
              np.arange(s, e)) for s, e in chunks]
    if workers <= 1:
        results = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    outcomes: list[AttackOutcome] = []
    for r in results:
        outcomes.extend(r)
    return outcomes


def _verify_feasible(attack: Attack, X: np.ndarray, outcomes) -> None:
    params = attack.describe()["params"]
    eps = params.get("eps")
    norm = params.get("norm", "linf")
    check_ball = attack.kind != "cw"  # CW is unconstrained; budget is a flag
    for i, out in enumerate(outcomes):
        x_adv = out.x_adv
        if x_adv.min() < 0.0 or x_adv.max() > 1.0:
            raise FeasibilityError(
                f"{attack.name}: example {i} leaves the unit box "
                f"[{x_adv.min():.3g}, {x_adv.max():.3g}]"
            )
        if check_ball and eps is not None:
            delta = x_adv - X[i]
            size = (np.abs(delta).max() if norm == "linf"
                    else np.sqrt((delta ** 2).sum()))
            if size > eps + 1e-9:
                raise FeasibilityError(
                    f"{attack.name}: example {i} leaves the {norm} eps-ball "
                    f"(|delta|={size:.6g} > {eps})"
                )


def _resolve_attack(attack, eps, seed):
    if isinstance(attack, Attack):
        return attack
    if isinstance(attack, str):
        if eps is None:
            raise ValidationError("pass eps when naming an attack by preset")
        return make_attack(attack, eps, seed)
    raise ValidationError(f"cannot interpret attack {attack!r}")


def _broken_mask(eval_model, dataset, outcomes):
    X_adv = np.stack([o.x_adv for o in outcomes])
    adv_pred = predict(eval_model, X_adv)
    budget_ok = np.array([o.within_budget for o in outcomes])
    return (adv_pred != dataset.y) & budget_ok, adv_pred


def _assemble(model_id, model_meta, attack_desc, dataset, clean_pred,
              adv_pred, broken, outcomes, seed, wall):
    clean_ok = clean_pred == dataset.y
    survived = clean_ok & ~broken
    records = [
        ExampleRecord(
            index=i,
            label=int(dataset.y[i]),
            clean_pred=int(clean_pred[i]),
            clean_correct=bool(clean_ok[i]),
            adv_pred=int(adv_pred[i]),
            attack_success=bool(broken[i]),
            within_budget=bool(outcomes[i].within_budget) if outcomes else True,
            norm=float(outcomes[i].norm) if outcomes else 0.0,
            best_loss=float(outcomes[i].best_loss) if outcomes else 0.0,
            survived=bool(survived[i]),
        )
        for i in range(len(dataset))
    ]
    return EvalReport(
        model_id=model_id,
        model_meta=model_meta or {},
        attack=attack_desc,
        natural_accuracy=100.0 * float(clean_ok.mean()),
        robust_accuracy=100.0 * float(survived.mean()),
        n_examples=len(dataset),
        seed=seed,
        wall_time_s=wall,
        per_example=records,
    )


def robust_accuracy(model: Model, dataset: Dataset, attack, *, eps=None,
                    seed: int = 0, model_id: str = "model", model_meta=None,
                    batch_size: int = 256, workers: int = 1) -> EvalReport:
    """Attack every example and report natural/robust accuracy.

    ``attack`` is an :class:`~lsrobust.attacks.Attack`, a preset name (with
    ``eps``), or a list of either — a list is evaluated as an ensemble where
    an example must survive every member to count as robust.
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    start = time.perf_counter()
    clean_pred = predict(model, dataset.X)
    if isinstance(attack, (list, tuple)):
        members = [_resolve_attack(a, eps, seed) for a in attack]
        broken = np.zeros(len(dataset), dtype=bool)
        outcomes = []
        for member in members:
            outs = _run_attack_chunks(model, member, dataset, batch_size, workers)
            _verify_feasible(member, dataset.X, outs)
            member_broken, _ = _broken_mask(model, dataset, outs)
            broken |= member_broken
            outcomes = outs  # records carry the last member's candidates
        desc = {"name": "ensemble", "kind": "ensemble",
                "params": {"members": [m.describe() for m in members]}}
        adv_pred = predict(model, np.stack([o.x_adv for o in outcomes]))
        return _assemble(model_id, model_meta, desc, dataset, clean_pred,
                         adv_pred, broken, outcomes, seed,
                         time.perf_counter() - start)
    runnable = _resolve_attack(attack, eps, seed)
    outcomes = _run_attack_chunks(model, runnable, dataset, batch_size, workers)
    _verify_feasible(runnable, dataset.X, outcomes)
    broken, adv_pred = _broken_mask(model, dataset, outcomes)
    return _assemble(model_id, model_meta, runnable.describe(), dataset,
                     clean_pred, adv_pred, broken, outcomes, seed,
                     time.perf_counter() - start)


def transfer_eval(source: Model, target: Model, dataset: Dataset, attack, *,
                  eps=None, seed: int = 0, source_id: str = "source",
                  target_id: str = "target", batch_size: int = 256,
                  workers: int = 1) -> TransferReport:
    """Craft white-box adversarial examples on ``source``; score ``target``.

    With ``source is target`` this equals :func:`robust_accuracy` exactly
    (identical crafting path and scoring convention).
    """
    if (source.input_dim != target.input_dim
            or source.num_classes != target.num_classes):
        raise ValidationError("source and target dimensions do not match")
    runnable = _resolve_attack(attack, eps, seed)
    outcomes = _run_attack_chunks(source, runnable, dataset, batch_size, workers)
    _verify_feasible(runnable, dataset.X, outcomes)
    broken, _ = _broken_mask(target, dataset, outcomes)
    clean_ok = predict(target, dataset.X) == dataset.y
    survived = clean_ok & ~broken
    return TransferReport(
        source_id=source_id,
        target_id=target_id,
        attack=runnable.describe(),
        transfer_robust_accuracy=100.0 * float(survived.mean()),
        natural_accuracy=100.0 * float(clean_ok.mean()),
        n_examples=len(dataset),
        seed=seed,
    )


@dataclass
class SweepRow:
    alpha: float
    natural_accuracy: float
    robust_accuracy: float


def alpha_sweep(alphas, train_set: Dataset, eval_set: Dataset,
                layer_sizes, train_cfg: TrainConfig, attack, *,
                eps=None, seed: int = 0, batch_size: int = 256,
                workers: int = 1):
    """Train one model per smoothing factor (shared seed) and evaluate each
    under the same fixed attack. Returns a list of :class:`SweepRow`."""
    from .network import init_model

    rows = []
    for alpha in alphas:
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ValidationError(f"alpha={alpha} out of [0, 1]")
        cfg = replace(train_cfg, label_mode="smoothed", alpha=alpha)
        model = init_model(layer_sizes, seed=cfg.rng_seed)
        trained, _ = train(model, train_set, cfg)
        report = robust_accuracy(trained, eval_set, attack, eps=eps, seed=seed,
                                 model_id=f"alpha={alpha:g}",
                                 batch_size=batch_size, workers=workers)
        rows.append(SweepRow(alpha, report.natural_accuracy,
                             report.robust_accuracy))
    return rows


@dataclass
class AblationRow:
    model_id: str
    step_size: float
    step_count: int
    robust_accuracy: float


def step_ablation(models: dict, dataset: Dataset, eps: float,
                  step_sizes=None, step_counts=None,
                  etas_for_counts=(0.01, 0.1), full_steps: int = 500):
    """Accuracy surface of the tanh-interval L-inf attack.

    Step-size rows run the full step budget at each size; step-count rows are
    read off one long run per step size (the keep-best state after k steps is
    exactly the k-step result, since the trajectory has no randomness).
    """
    if step_sizes is None:
        step_sizes = [round(0.01 * i, 2) for i in range(1, 11)]
    if step_counts is None:
        step_counts = list(range(50, 501, 50))
    rows = []
    for model_id, model in models.items():
        clean_ok = predict(model, dataset.X) == dataset.y
        for eta in step_sizes:
            outs, _ = _ours_engine(model, dataset.X, dataset.y, eps,
                                   full_steps, float(eta))
            broken = np.array([o.success for o in outs])
            acc = 100.0 * float((clean_ok & ~broken).mean())
            rows.append(AblationRow(model_id, float(eta), full_steps, acc))
        for eta in etas_for_counts:
            _, snaps = _ours_engine(model, dataset.X, dataset.y, eps,
                                    max(step_counts), float(eta),
                                    snapshot_steps=step_counts)
            for count in step_counts:
                broken = np.array([o.success for o in snaps[count]])
                acc = 100.0 * float((clean_ok & ~broken).mean())
                rows.append(AblationRow(model_id, float(eta), int(count), acc))
    return rows


@dataclass
class ToyDemo:
    xs: np.ndarray
    hard_correct: np.ndarray
    hard_other: np.ndarray
    smooth_correct: np.ndarray
    smooth_other: np.ndarray
    hard_crossings: list
    smooth_crossings: list


def _crossings(model, t, lo, hi, samples, tol=1e-6):
    xs = np.linspace(lo, hi, samples)
    Z = forward(model, xs[:, None])
    other = 1 - t
    g = Z[:, t] - Z[:, other]
    found = []
    for i in range(samples - 1):
        a, b = xs[i], xs[i + 1]
        ga, gb = g[i], g[i + 1]
        if ga == 0.0:
            found.append(float(a))
            continue
        if ga * gb < 0.0:
            for _ in range(200):
                mid = 0.5 * (a + b)
                zm = forward(model, np.array([mid]))
                gm = float(zm[t] - zm[other])
                if abs(gm) <= tol * 0.5 or (b - a) < 1e-14:
                    break
                if ga * gm < 0.0:
                    b, gb = mid, gm
                else:
                    a, ga = mid, gm
            found.append(float(0.5 * (a + b)))
    return xs, Z, found


def toy_demo_1d(model_hard: Model, model_smooth: Model, t: int = 0,
                lo: float = 0.0, hi: float = 1.0,
                samples: int = 200) -> ToyDemo:
    """Logit curves of two 1-D, 2-class models over an interval, with the
    decision-boundary crossings located by bisection (|z_t - z_other| <= 1e-6
    at the reported abscissae)."""
    for m in (model_hard, model_smooth):
        if m.input_dim != 1 or m.num_classes != 2:
            raise ValidationError("toy demo needs 1-D input, 2-class models")
    xs, Zh, cross_h = _crossings(model_hard, t, lo, hi, samples)
    _, Zs, cross_s = _crossings(model_smooth, t, lo, hi, samples)
    other = 1 - t
    return ToyDemo(
        xs=xs,
        hard_correct=Zh[:, t], hard_other=Zh[:, other],
        smooth_correct=Zs[:, t], smooth_other=Zs[:, other],
        hard_crossings=cross_h, smooth_crossings=cross_s,
    )


@dataclass
class OracleResult:
    adversarial_exists: bool
    witness: np.ndarray | None
    certified: bool
    resolution: float
    note: str = ""


def exhaustive_oracle(model: Model, x, t: int, eps: float,
                      grid_points: int | None = None) -> OracleResult:
    """Ground-truth adversarial-existence check for tiny models.

    Linear (single-layer) models are decided exactly: each margin is linear,
    so its minimum over the box-intersected ball sits at a per-coordinate
    bound. Other models are grid-searched at a documented resolution; a miss
    then means "none found at this resolution", not a proof, and
    ``certified`` is False.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.input_dim:
        raise ValidationError("x does not match model input_dim")
    t = int(t)
    lo = np.maximum(x - eps, 0.0)
    hi = np.minimum(x + eps, 1.0)
    if len(model.layers) == 1:
        lay = model.layers[0]
        best_val, best_w = np.inf, None
        for i in range(model.num_classes):
            if i == t:
                continue
            c = lay.weight[t] - lay.weight[i]
            corner = np.where(c > 0, lo, hi)
            val = float(c @ corner + lay.bias[t] - lay.bias[i])
            if val < best_val:
                best_val, best_w = val, corner
        if best_val <= 0.0 and int(predict(model, best_w)) != t:
            return OracleResult(True, best_w.copy(), True, 0.0,
                                "exact (linear corner minimization)")
        return OracleResult(False, None, True, 0.0,
                            "exact (linear corner minimization)")
    d = model.input_dim
    if d > 12:
        raise ValidationError(
            f"refusing nonlinear oracle for input dim {d} > 12"
        )
    if grid_points is None:
        grid_points = 5 if d <= 6 else 3
    if grid_points < 2:
        raise ValidationError("grid_points must be >= 2")
    total = grid_points ** d
    if total > 2 ** 22:
        raise ValidationError(
            f"grid of {total} points is too large; lower grid_points"
        )
    axes = [np.linspace(lo[j], hi[j], grid_points) for j in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    resolution = float((hi - lo).max() / (grid_points - 1))
    for s in range(0, total, 65536):
        block = mesh[s:s + 65536]
        preds = predict(model, block)
        hits = np.nonzero(preds != t)[0]
        if hits.size:
            return OracleResult(True, block[hits[0]].copy(), True, resolution,
                                f"grid search, {grid_points} points/dim")
    return OracleResult(False, None, False, resolution,
                        f"no adversarial found at resolution {resolution:.4g}")


# ---------------------------------------------------------------------------
# report serialization (versioned TSV + JSON)


_EVAL_COLUMNS = ("index", "label", "clean_pred", "clean_correct", "adv_pred",
                 "attack_success", "within_budget", "norm", "best_loss",
                 "survived")


def write_eval_report(report: EvalReport, stem) -> tuple[str, str]:
    """Write ``<stem>.tsv`` (per-example rows + one summary row) and
    ``<stem>.json`` (machine-readable summary). Returns both paths."""
    stem = str(stem)
    tsv_path, json_path = stem + ".tsv", stem + ".json"
    with open(tsv_path, "w") as f:
        f.write(f"# schema_version={SCHEMA_VERSION}\n")
        f.write("\t".join(_EVAL_COLUMNS) + "\n")
        for r in report.per_example:
            f.write("\t".join([
                str(r.index), str(r.label), str(r.clean_pred),
                str(int(r.clean_correct)), str(r.adv_pred),
                str(int(r.attack_success)), str(int(r.within_budget)),
                f"{r.norm:.9g}", f"{r.best_loss:.9g}", str(int(r.survived)),
            ]) + "\n")
        f.write("\t".join([
            "summary", "-", "-", f"{report.natural_accuracy:.4f}", "-", "-",
            "-", "-", "-", f"{report.robust_accuracy:.4f}",
        ]) + "\n")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "model_id": report.model_id,
        "model_meta": report.model_meta,
        "attack": report.attack,
        "natural_accuracy": report.natural_accuracy,
        "robust_accuracy": report.robust_accuracy,
        "n_examples": report.n_examples,
        "seed": report.seed,
        "wall_time_s": report.wall_time_s,
    }
    with open(json_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return tsv_path, json_path


def write_transfer_report(report: TransferReport, stem) -> str:
    path = str(stem) + ".json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "source_id": report.source_id,
        "target_id": report.target_id,
        "attack": report.attack,
        "transfer_robust_accuracy": report.transfer_robust_accuracy,
        "natural_accuracy": report.natural_accuracy,
        "n_examples": report.n_examples,
        "seed": report.seed,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_rows_tsv(rows, columns, path) -> str:
    """Generic table writer for sweep/ablation/demo rows."""
    path = str(path)
    with open(path, "w") as f:
        f.write(f"# schema_version={SCHEMA_VERSION}\n")
        f.write("\t".join(columns) + "\n")
        for row in rows:
            f.write("\t".join(
                f"{getattr(row, c):.6g}" if isinstance(getattr(row, c), float)
                else str(getattr(row, c)) for c in columns) + "\n")
    return path
