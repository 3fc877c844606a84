"""Training loop, evaluation reports, detection, baseline, and the scaling study."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import DatasetManifest, batch_iter
from .enhance import ENHANCED, ORIGINAL, cao_fit_threshold, count_gap_bins
from .errors import DivergedLoss, EmptySplit, MissingImage, SizesExceedData, SpecMismatch
from .image import histogram, load_pgm
from .models import build_model, finetune_init
from .nn import (
    Checkpoint,
    TrainConfig,
    init_velocity,
    learning_rate,
    load_checkpoint,
    loss_softmax_xent,
    save_checkpoint,
    sgd_step,
)

EVAL_BATCH = 128


def thread_cap() -> int:
    """BLAS thread limit for numeric work; CEF_THREADS overrides.

    Defaults to 1: multi-threaded BLAS measurably slows these memory-bound
    medium-size kernels on small core counts, and single-threaded execution
    keeps results bit-deterministic regardless of the machine.
    """
    try:
        return max(1, int(os.environ.get("CEF_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class EvalReport:
    """Accuracy summary for one checkpoint on one split.

    Confusion counts treat the enhanced class as positive. Per-gamma accuracy
    is measured over the originals plus the enhanced entries of that gamma.
    """

    scenario: str
    model: str
    iteration: int
    overall_acc: float
    per_gamma_acc: dict[float, float]
    confusion: tuple[int, int, int, int]  # tp, fp, tn, fn
    sizes: dict[str, int]
    params: dict[str, float] = field(default_factory=dict)

    def to_csv(self) -> str:
        tp, fp, tn, fn = self.confusion
        rows = [
            ("scenario", self.scenario),
            ("model", self.model),
            ("iteration", self.iteration),
            ("overall_accuracy", f"{self.overall_acc:.6f}"),
            ("tp", tp), ("fp", fp), ("tn", tn), ("fn", fn),
        ]
        for g in sorted(self.per_gamma_acc):
            rows.append((f"accuracy_gamma_{g}", f"{self.per_gamma_acc[g]:.6f}"))
        for k in sorted(self.sizes):
            rows.append((f"n_{k}", self.sizes[k]))
        for k in sorted(self.params):
            rows.append((k, self.params[k]))
        return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


@dataclass
class TrainLog:
    """Periodic training loss with the exact scheduled learning rate, plus
    periodic validation loss/accuracy."""

    steps: list[tuple[int, float, float]] = field(default_factory=list)
    vals: list[tuple[int, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["kind,iteration,loss,lr,accuracy"]
        for it, loss, lr in self.steps:
            lines.append(f"step,{it},{loss:.8f},{lr:.10f},")
        for it, loss, acc in self.vals:
            lines.append(f"val,{it},{loss:.8f},,{acc:.6f}")
        return "\n".join(lines) + "\n"


def _mode_for(model_name: str) -> str:
    return "pixel" if model_name == "pcnn" else "histogram"


def _scenario_of(manifest: DatasetManifest) -> str:
    any_attack = any(e.attack for e in manifest.entries)
    any_quality = any(e.quality is not None for e in manifest.entries)
    if any_attack and any_quality:
        return "prejpeg_anti"
    if any_attack:
        return "anti"
    if any_quality:
        return "prejpeg"
    return "plain"


def _tensorize(entries, mode: str, cache: dict):
    labels = np.array([1 if e.label == ENHANCED else 0 for e in entries], dtype=np.int64)
    images = [_cached_load(e.path, cache) for e in entries]
    if mode == "pixel":
        x = np.stack(images).astype(np.float32)[:, None, :, :] / np.float32(255.0)
    else:
        h = np.stack([histogram(im) for im in images]).astype(np.float32)
        x = (h / h.sum(axis=1, keepdims=True))[:, None, None, :]
    return x, labels


def _eval_pass(net, manifest: DatasetManifest, split: str, cache: dict):
    """Inference over a split in manifest order: mean loss, predictions, labels."""
    entries = manifest.split_entries(split)
    if not entries:
        raise EmptySplit(f"split {split!r} is empty")
    mode = _mode_for(net.name)
    preds = np.empty(len(entries), dtype=np.int64)
    labels = np.empty(len(entries), dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, len(entries), EVAL_BATCH):
        chunk = entries[start : start + EVAL_BATCH]
        x, y = _tensorize(chunk, mode, cache)
        logits = net.forward(x, train=False)
        loss, _ = loss_softmax_xent(logits, y)
        loss_sum += loss * len(y)
        preds[start : start + len(y)] = logits.argmax(axis=1)
        labels[start : start + len(y)] = y
    return loss_sum / len(entries), preds, labels, entries


def train(model_name: str, manifest: DatasetManifest, cfg: TrainConfig, out_path,
          init: Checkpoint | None = None):
    """Run cfg.max_iter SGD steps; write best-validation and final checkpoints.

    Returns (final Checkpoint, TrainLog). Deterministic for a fixed config and
    manifest: identical seeds reproduce identical loss sequences and checkpoint
    bytes. The best-validation checkpoint lands at `<out_path>.best`.
    """
    with threadpool_limits(limits=thread_cap()):
        return _train_impl(model_name, manifest, cfg, out_path, init)


def _train_impl(model_name: str, manifest: DatasetManifest, cfg: TrainConfig, out_path,
                init: Checkpoint | None):
    if model_name not in ("pcnn", "hcnn"):
        raise ValueError(f"unknown model {model_name!r}")
    train_entries = manifest.split_entries("train")
    if not train_entries:
        raise EmptySplit("manifest has no train split")
    mode = _mode_for(model_name)
    cache: dict = {}

    if model_name == "pcnn":
        first = load_pgm(train_entries[0].path)
        net = build_model(model_name, first.shape[0], first.shape[1], seed=cfg.seed)
    else:
        net = build_model(model_name, seed=cfg.seed)
    if init is not None:
        finetune_init(init, net)

    params = net.param_arrays()
    velocity = init_velocity(params)
    log = TrainLog()
    best_acc = -1.0
    best_path = f"{out_path}.best"

    def validate(at_iter: int) -> None:
        nonlocal best_acc
        val_loss, preds, labels, _ = _eval_pass(net, manifest, "val", cache)
        acc = float((preds == labels).mean())
        log.vals.append((at_iter, val_loss, acc))
        if acc > best_acc:
            best_acc = acc
            save_checkpoint(net, at_iter, best_path)

    validate(0)
    it = 0
    epoch = 0
    while it < cfg.max_iter:
        for x, y in batch_iter(manifest, "train", cfg.batch_size, cfg.seed,
                               epoch, mode=mode, cache=cache):
            logits = net.forward(x, train=True)
            loss, dlogits = loss_softmax_xent(logits, y)
            if not np.isfinite(loss):
                raise DivergedLoss(f"loss diverged at iteration {it}")
            net.backward(dlogits)
            sgd_step(params, net.grad_arrays(), velocity, cfg, it)
            if it % cfg.log_every == 0:
                log.steps.append((it, loss, learning_rate(cfg, it)))
            it += 1
            if it % cfg.val_every == 0 and it < cfg.max_iter:
                validate(it)
            if it >= cfg.max_iter:
                break
        epoch += 1

    validate(cfg.max_iter)
    final = save_checkpoint(net, cfg.max_iter, out_path)
    return final, log


def _as_checkpoint(ckpt) -> Checkpoint:
    if isinstance(ckpt, Checkpoint):
        return ckpt
    return load_checkpoint(ckpt)


def evaluate(ckpt, manifest: DatasetManifest, split: str,
             cache: dict | None = None) -> EvalReport:
    """Inference-mode accuracy report with per-gamma breakdown for one split."""
    ckpt = _as_checkpoint(ckpt)
    net = ckpt.build()
    cache = {} if cache is None else cache
    with threadpool_limits(limits=thread_cap()):
        _, preds, labels, entries = _eval_pass(net, manifest, split, cache)

    correct = preds == labels
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))

    gammas = np.array([e.gamma if e.gamma is not None else np.nan for e in entries])
    is_orig = np.isnan(gammas)
    per_gamma = {}
    for g in sorted({float(g) for g in gammas[~np.isnan(gammas)]}):
        mask = is_orig | (gammas == g)
        per_gamma[g] = float(correct[mask].mean())

    return EvalReport(
        scenario=_scenario_of(manifest),
        model=net.name,
        iteration=ckpt.iteration,
        overall_acc=float(correct.mean()),
        per_gamma_acc=per_gamma,
        confusion=(tp, fp, tn, fn),
        sizes={"total": len(entries), "original": int(is_orig.sum()),
               "enhanced": int((~is_orig).sum())},
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def detect(ckpt, image_paths, mode: str) -> list[tuple[str, float]]:
    """Classify images from disk; one (label, confidence) row per input path.

    Confidence is the softmax probability of the predicted class. `mode` must
    match the checkpoint's domain: "pixel" for pcnn, "histogram" for hcnn.
    """
    if mode not in ("pixel", "histogram"):
        raise ValueError(f"unknown mode {mode!r}")
    ckpt = _as_checkpoint(ckpt)
    net = ckpt.build()
    if _mode_for(net.name) != mode:
        raise SpecMismatch(f"mode {mode!r} does not match checkpoint model {net.name!r}")
    out = []
    with threadpool_limits(limits=thread_cap()):
        for path in image_paths:
            try:
                img = load_pgm(path)
            except FileNotFoundError as exc:
                raise MissingImage(f"cannot detect on missing image: {path}") from exc
            if mode == "pixel":
                x = img.astype(np.float32)[None, None, :, :] / np.float32(255.0)
            else:
                h = histogram(img).astype(np.float32)
                x = (h / h.sum())[None, None, None, :]
            p = _softmax(net.forward(x, train=False))[0]
            cls = int(p.argmax())
            out.append((ENHANCED if cls == 1 else ORIGINAL, float(p[cls])))
    return out


def _train_sources(manifest: DatasetManifest) -> list[str]:
    seen, order = set(), []
    for e in manifest.entries:
        if e.split == "train" and e.source not in seen:
            seen.add(e.source)
            order.append(e.source)
    return order


def subset_train(manifest: DatasetManifest, n_sources: int, seed: int) -> DatasetManifest:
    """Keep the first n_sources train sources of a seeded shuffle (nested subsets)."""
    sources = _train_sources(manifest)
    if n_sources > len(sources):
        raise SizesExceedData(f"requested {n_sources} train sources, have {len(sources)}")
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5CA1])).permutation(
        len(sources))
    keep = {sources[i] for i in perm[:n_sources]}
    entries = [e for e in manifest.entries
               if e.split != "train" or e.source in keep]
    return DatasetManifest(entries)


def scaling_study(manifest: DatasetManifest, sizes: list[int], cfg: TrainConfig,
                  work_dir, seed: int = 0, archs=("pcnn", "hcnn")):
    """Train both architectures on nested train subsets; fixed test split.

    `sizes` counts train sources (pairs, for single-gamma scenarios); smaller
    subsets are strict prefixes of larger ones. Each job's best-validation
    checkpoint is what gets scored on the fixed test split. Returns rows of
    (size, {arch: accuracy}).
    """
    os.makedirs(work_dir, exist_ok=True)
    rows = []
    for size in sizes:
        sub = subset_train(manifest, size, seed)
        accs = {}
        for ai, arch in enumerate(archs):
            job_seed = int(np.random.SeedSequence([seed, size, ai]).generate_state(1)[0]
                           % (2**31))
            job_cfg = replace(cfg, seed=job_seed)
            out = os.path.join(work_dir, f"{arch}_{size}.ckpt")
            train(arch, sub, job_cfg, out)
            accs[arch] = evaluate(f"{out}.best", sub, "test").overall_acc
        rows.append((size, accs))
    return rows


def scaling_table_csv(rows, archs=("pcnn", "hcnn")) -> str:
    lines = ["size," + ",".join(archs)]
    for size, accs in rows:
        lines.append(f"{size}," + ",".join(f"{accs[a]:.6f}" for a in archs))
    return "\n".join(lines) + "\n"


def baseline_eval(manifest: DatasetManifest, cache: dict | None = None) -> EvalReport:
    """Gap-count threshold baseline: fit on the train split, score the test split."""
    cache = {} if cache is None else cache

    def gap_counts(split: str):
        entries = manifest.split_entries(split)
        if not entries:
            raise EmptySplit(f"split {split!r} is empty")
        stats, labels = [], []
        for e in entries:
            img = _cached_load(e.path, cache)
            stats.append(count_gap_bins(histogram(img)))
            labels.append(1 if e.label == ENHANCED else 0)
        return entries, stats, np.array(labels, dtype=np.int64)

    _, train_stats, train_labels = gap_counts("train")
    threshold = cao_fit_threshold(list(zip(train_stats, train_labels)))

    entries, test_stats, labels = gap_counts("test")
    preds = np.array([1 if s.gap_count >= threshold else 0 for s in test_stats],
                     dtype=np.int64)
    correct = preds == labels
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))

    gammas = np.array([e.gamma if e.gamma is not None else np.nan for e in entries])
    is_orig = np.isnan(gammas)
    per_gamma = {}
    for g in sorted({float(g) for g in gammas[~np.isnan(gammas)]}):
        mask = is_orig | (gammas == g)
        per_gamma[g] = float(correct[mask].mean())

    return EvalReport(
        scenario=_scenario_of(manifest),
        model="cao",
        iteration=0,
        overall_acc=float(correct.mean()),
        per_gamma_acc=per_gamma,
        confusion=(tp, fp, tn, fn),
        sizes={"total": len(entries), "original": int(is_orig.sum()),
               "enhanced": int((~is_orig).sum())},
        params={"threshold": float(threshold)},
    )


def _cached_load(path, cache: dict):
    if path in cache:
        return cache[path]
    try:
        arr = load_pgm(path)
    except FileNotFoundError as exc:
        raise MissingImage(f"manifest entry missing on disk: {path}") from exc
    cache[path] = arr
    return arr
