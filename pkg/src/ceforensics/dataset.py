"""Scenario construction, manifests, splits, batching, and the attack hook.

A scenario turns source patches into labeled original/enhanced pairs:

  plain         crop -> {keep, gamma}
  prejpeg       crop -> jpeg(Q) -> {keep, gamma}
  anti          crop -> {keep, gamma -> attack}
  prejpeg_anti  crop -> jpeg(Q) -> {keep, gamma -> attack}

Processed patches are persisted as PGM files under the output directory in a
parameter-addressed layout (`<source>/<variant>.pgm`), and the manifest is a
CSV with header `source,path,label,gamma,quality,attack,split`. Splits are
disjoint by source: no source image contributes patches to two splits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import image as img_mod
from .enhance import ENHANCED, ORIGINAL, gamma_correct
from .errors import (
    EmptySplit,
    InsufficientSources,
    MissingImage,
    SizesExceedData,
    UnknownScenario,
)
from .image import central_crop, histogram, load_pgm, save_pgm, synth_patch
from .jpegsim import jpeg_roundtrip

SCENARIOS = ("plain", "prejpeg", "anti", "prejpeg_anti")
SPLITS = ("train", "val", "test")
MANIFEST_HEADER = "source,path,label,gamma,quality,attack,split"


@dataclass
class ManifestEntry:
    source: str
    path: str
    label: str  # "original" | "enhanced"
    gamma: float | None = None
    quality: int | None = None
    attack: str | None = None
    split: str = ""


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self) -> None:
        seen_split: dict[str, str] = {}
        for e in self.entries:
            if e.label not in (ORIGINAL, ENHANCED):
                raise ValueError(f"bad label {e.label!r} for {e.path}")
            if e.label == ENHANCED and (e.gamma is None or e.gamma <= 0):
                raise ValueError(f"enhanced entry without a gamma: {e.path}")
            if e.label == ORIGINAL and e.gamma is not None:
                raise ValueError(f"original entry carries a gamma: {e.path}")
            if e.attack is not None and e.label != ENHANCED:
                raise ValueError(f"attack tag on a non-enhanced entry: {e.path}")
            if e.quality is not None and not 1 <= e.quality <= 100:
                raise ValueError(f"bad quality {e.quality} for {e.path}")
            if e.split:
                if e.split not in SPLITS:
                    raise ValueError(f"bad split {e.split!r} for {e.path}")
                prev = seen_split.setdefault(e.source, e.split)
                if prev != e.split:
                    raise ValueError(
                        f"source {e.source} appears in splits {prev} and {e.split}")

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def gammas(self) -> list[float]:
        return sorted({e.gamma for e in self.entries if e.gamma is not None})

    def save(self, path) -> None:
        lines = [MANIFEST_HEADER]
        for e in self.entries:
            lines.append(",".join([
                e.source,
                e.path,
                e.label,
                "" if e.gamma is None else repr(float(e.gamma)),
                "" if e.quality is None else str(e.quality),
                e.attack or "",
                e.split,
            ]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        if not os.path.isfile(path):
            raise MissingImage(f"no such manifest: {path}")
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != MANIFEST_HEADER:
                raise ValueError(f"unexpected manifest header: {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                source, p, label, gamma, quality, attack, split = line.split(",")
                entries.append(ManifestEntry(
                    source, p, label,
                    float(gamma) if gamma else None,
                    int(quality) if quality else None,
                    attack or None,
                    split,
                ))
        manifest = cls(entries)
        manifest.validate()
        return manifest


@dataclass
class ScenarioConfig:
    """What to build: scenario kind, gamma and quality sets, patch geometry,
    per-split source counts, and the master seed. Splits follow the reference
    8000/2000/10000 shape by default; scale them to the data at hand.
    """

    scenario: str = "plain"
    gammas: tuple[float, ...] = (0.6, 0.8, 1.2, 1.4)
    qualities: tuple[int, ...] = (50, 70)
    patch: int = 128
    sizes: tuple[int, int, int] = (8000, 2000, 10000)
    seed: int = 0
    smoothness: float = 2.0
    crop_mode: str = "central"  # "central": one patch per source; "grid": all tiles

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise UnknownScenario(
                f"unknown scenario {self.scenario!r}, expected one of {SCENARIOS}")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("gamma values must be positive")
        if any(not 1 <= q <= 100 for q in self.qualities):
            raise ValueError("quality values must lie in [1, 100]")
        if self.patch <= 0 or any(s < 1 for s in self.sizes):
            raise ValueError("patch size and split sizes must be positive")
        if self.crop_mode not in ("central", "grid"):
            raise ValueError(f"unknown crop mode {self.crop_mode!r}")


def _sub_seed(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


def _patch_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def attack_dither(img, seed: int) -> np.ndarray:
    """Histogram-dithering attack stand-in: each pixel moves by +-1 with
    probability 1/2 (either direction equally likely), clamped to [0, 255].
    Fills most single-bin histogram gaps while perturbing pixels by at most 1.
    """
    arr = img_mod.check_gray8(img)
    rng = np.random.default_rng(seed)
    u = rng.random(arr.shape)
    delta = np.where(u < 0.25, -1, np.where(u < 0.5, 1, 0)).astype(np.int16)
    return np.clip(arr.astype(np.int16) + delta, 0, 255).astype(np.uint8)


def _load_sources(src_dir, cfg: ScenarioConfig, count: int) -> list[tuple[str, np.ndarray]]:
    if src_dir is None:
        out = []
        for i in range(count):
            patch = synth_patch(_patch_seed(cfg.seed, i), cfg.patch, cfg.patch,
                                cfg.smoothness)
            out.append((f"syn{i:06d}", patch))
        return out

    paths = sorted(
        os.path.join(src_dir, name)
        for name in os.listdir(src_dir)
        if name.lower().endswith(".pgm")
    )
    out = []
    for p in paths:
        base = os.path.splitext(os.path.basename(p))[0]
        img = load_pgm(p)
        if cfg.crop_mode == "central":
            out.append((base, central_crop(img, cfg.patch, cfg.patch)))
        else:
            h, w = img.shape
            for r in range(h // cfg.patch):
                for c in range(w // cfg.patch):
                    tile = img[r * cfg.patch : (r + 1) * cfg.patch,
                               c * cfg.patch : (c + 1) * cfg.patch].copy()
                    out.append((f"{base}_r{r}c{c}", tile))
    if len(out) < count:
        raise InsufficientSources(
            f"need {count} source patches, found {len(out)} in {src_dir}")
    return out[:count]


def build_scenario(cfg: ScenarioConfig, out_dir, src_dir=None) -> DatasetManifest:
    """Materialize a scenario: PGM patches on disk plus a split, validated manifest.

    Sources come from `src_dir` (PGM files, cropped per cfg.crop_mode) or, when
    src_dir is None, from the synthetic generator. Each source yields one
    original patch per quality setting (or one uncompressed original) and one
    enhanced patch per (gamma, quality) pairing. Rebuilding with the same
    configuration reproduces byte-identical files.
    """
    total = sum(cfg.sizes)
    sources = _load_sources(src_dir, cfg, total)
    use_jpeg = cfg.scenario in ("prejpeg", "prejpeg_anti")
    use_attack = cfg.scenario in ("anti", "prejpeg_anti")
    qualities = cfg.qualities if use_jpeg else (None,)

    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for idx, (source, patch) in enumerate(sources):
        sdir = os.path.join(out_dir, source)
        os.makedirs(sdir, exist_ok=True)
        for q in qualities:
            qtag = f"_q{q}" if q is not None else ""
            base = patch if q is None else jpeg_roundtrip(patch, q)
            orig_path = os.path.join(sdir, f"orig{qtag}.pgm")
            save_pgm(base, orig_path)
            entries.append(ManifestEntry(source, orig_path, ORIGINAL, quality=q))
            for g in cfg.gammas:
                enh = gamma_correct(base, g)
                attack = None
                atag = ""
                if use_attack:
                    enh = attack_dither(enh, _patch_seed(cfg.seed, 7_000_000 + idx))
                    attack = "dither"
                    atag = "_dither"
                enh_path = os.path.join(sdir, f"g{g}{qtag}{atag}.pgm")
                save_pgm(enh, enh_path)
                entries.append(ManifestEntry(source, enh_path, ENHANCED,
                                             gamma=float(g), quality=q, attack=attack))

    manifest = split(DatasetManifest(entries), cfg.seed, cfg.sizes)
    manifest.validate()
    manifest.save(os.path.join(out_dir, "manifest.csv"))
    return manifest


def split(manifest: DatasetManifest, seed: int,
          sizes: tuple[int, int, int]) -> DatasetManifest:
    """Assign train/val/test tags source-disjointly by a seeded shuffle.

    Sizes count sources, so all patches derived from one source land in the
    same split and paired original/enhanced patches never straddle splits.
    """
    order_seen: list[str] = []
    seen = set()
    for e in manifest.entries:
        if e.source not in seen:
            seen.add(e.source)
            order_seen.append(e.source)
    n_train, n_val, n_test = sizes
    if n_train + n_val + n_test > len(order_seen):
        raise SizesExceedData(
            f"split sizes {sizes} exceed {len(order_seen)} available sources")
    rng = _sub_seed(seed, 0xD15C)
    perm = rng.permutation(len(order_seen))
    assignment = {}
    for rank, src_idx in enumerate(perm):
        if rank < n_train:
            tag = "train"
        elif rank < n_train + n_val:
            tag = "val"
        elif rank < n_train + n_val + n_test:
            tag = "test"
        else:
            tag = ""
        assignment[order_seen[src_idx]] = tag
    entries = [replace(e, split=assignment[e.source]) for e in manifest.entries]
    out = DatasetManifest(entries)
    out.validate()
    return out


def _load_entry_image(entry: ManifestEntry, cache: dict | None) -> np.ndarray:
    if cache is not None and entry.path in cache:
        return cache[entry.path]
    try:
        arr = load_pgm(entry.path)
    except FileNotFoundError as exc:
        raise MissingImage(f"manifest entry missing on disk: {entry.path}") from exc
    if cache is not None:
        cache[entry.path] = arr
    return arr


def batch_iter(manifest: DatasetManifest, split_name: str, batch_size: int,
               seed: int, epoch: int, mode: str = "pixel", cache: dict | None = None):
    """Yield (batch, labels) over one split in a per-epoch deterministic order.

    mode "pixel": float32 (B, 1, H, W) patches scaled to [0, 1].
    mode "histogram": float32 (B, 1, 1, 256) normalized histograms (rows sum
    to 1). Labels are int64, original 0 / enhanced 1. The final short batch is
    emitted. Pass a dict as `cache` to keep decoded images across epochs.
    """
    if mode not in ("pixel", "histogram"):
        raise ValueError(f"unknown batch mode {mode!r}")
    entries = manifest.split_entries(split_name)
    if not entries:
        raise EmptySplit(f"split {split_name!r} is empty")
    order = _sub_seed(seed, epoch, 0xBA7C).permutation(len(entries))
    for start in range(0, len(order), batch_size):
        chosen = [entries[i] for i in order[start : start + batch_size]]
        labels = np.array([1 if e.label == ENHANCED else 0 for e in chosen],
                          dtype=np.int64)
        images = [_load_entry_image(e, cache) for e in chosen]
        if mode == "pixel":
            x = np.stack(images).astype(np.float32)[:, None, :, :] / np.float32(255.0)
        else:
            hists = [histogram(im) for im in images]
            x = np.stack(hists).astype(np.float32)
            x /= x.sum(axis=1, keepdims=True)
            x = x[:, None, None, :]
        yield x, labels
