import numpy as np
import pytest

from ceforensics.dataset import (
    DatasetManifest,
    ManifestEntry,
    ScenarioConfig,
    attack_dither,
    batch_iter,
    build_scenario,
    split,
)
from ceforensics.enhance import count_gap_bins, gamma_correct
from ceforensics.errors import (
    EmptySplit,
    InsufficientSources,
    SizesExceedData,
    UnknownScenario,
)
from ceforensics.image import histogram, load_pgm, save_pgm, synth_patch
from ceforensics.jpegsim import jpeg_roundtrip


def small_cfg(**kw):
    base = dict(scenario="plain", gammas=(0.6,), qualities=(), patch=16,
                sizes=(6, 2, 2), seed=5, smoothness=1.0)
    base.update(kw)
    return ScenarioConfig(**base)


def test_build_plain_counts_and_labels(tmp_path):
    man = build_scenario(small_cfg(), tmp_path / "ds")
    orig = [e for e in man.entries if e.label == "original"]
    enh = [e for e in man.entries if e.label == "enhanced"]
    assert len(orig) == 10 and len(enh) == 10
    assert all(e.gamma is None and e.quality is None for e in orig)
    assert all(e.gamma == 0.6 and e.quality is None and e.attack is None for e in enh)


def test_build_plain_enhanced_reproducible_via_oracle(tmp_path):
    man = build_scenario(small_cfg(), tmp_path / "ds")
    by_source = {}
    for e in man.entries:
        by_source.setdefault(e.source, {})[e.label] = e
    for pair in by_source.values():
        orig = load_pgm(pair["original"].path)
        enh = load_pgm(pair["enhanced"].path)
        assert np.array_equal(enh, gamma_correct(orig, 0.6))


def test_build_prejpeg_carries_quality_and_matches_pipeline(tmp_path):
    cfg = small_cfg(scenario="prejpeg", qualities=(50,))
    man = build_scenario(cfg, tmp_path / "ds")
    assert all(e.quality == 50 for e in man.entries)
    by_source = {}
    for e in man.entries:
        by_source.setdefault(e.source, {})[e.label] = e
    pair = next(iter(by_source.values()))
    orig = load_pgm(pair["original"].path)
    enh = load_pgm(pair["enhanced"].path)
    assert np.array_equal(enh, gamma_correct(orig, 0.6))  # gamma applied after jpeg


def test_build_anti_attacks_only_enhanced(tmp_path):
    man = build_scenario(small_cfg(scenario="anti"), tmp_path / "ds")
    for e in man.entries:
        if e.label == "enhanced":
            assert e.attack == "dither"
        else:
            assert e.attack is None


def test_build_rejects_unknown_scenario():
    with pytest.raises(UnknownScenario):
        small_cfg(scenario="mystery")


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        small_cfg(gammas=(0.6, -1.0))
    with pytest.raises(ValueError):
        small_cfg(qualities=(0,))
    with pytest.raises(ValueError):
        small_cfg(sizes=(0, 1, 1))
    with pytest.raises(ValueError):
        small_cfg(crop_mode="diagonal")


def test_build_insufficient_sources(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(3):
        save_pgm(synth_patch(i, 16, 16, 1.0), src / f"s{i}.pgm")
    with pytest.raises(InsufficientSources):
        build_scenario(small_cfg(), tmp_path / "ds", src_dir=src)


def test_build_from_directory_with_central_crop(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(10):
        save_pgm(synth_patch(i, 32, 32, 1.0), src / f"s{i:02d}.pgm")
    man = build_scenario(small_cfg(), tmp_path / "ds", src_dir=src)
    img = load_pgm(man.entries[0].path)
    assert img.shape == (16, 16)


def test_build_grid_crop_mode(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    save_pgm(synth_patch(0, 48, 32, 1.0), src / "big.pgm")  # 2x3 tiles of 16
    cfg = small_cfg(crop_mode="grid", sizes=(4, 1, 1))
    man = build_scenario(cfg, tmp_path / "ds", src_dir=src)
    sources = {e.source for e in man.entries}
    assert len(sources) == 6


def test_rebuild_is_byte_identical(tmp_path):
    man1 = build_scenario(small_cfg(), tmp_path / "a")
    man2 = build_scenario(small_cfg(), tmp_path / "b")
    for e1, e2 in zip(man1.entries, man2.entries):
        assert open(e1.path, "rb").read() == open(e2.path, "rb").read()
    a = (tmp_path / "a" / "manifest.csv").read_text().replace(str(tmp_path / "a"), "@")
    b = (tmp_path / "b" / "manifest.csv").read_text().replace(str(tmp_path / "b"), "@")
    assert a == b


def test_manifest_roundtrip(tmp_path):
    man = build_scenario(small_cfg(scenario="anti"), tmp_path / "ds")
    loaded = DatasetManifest.load(tmp_path / "ds" / "manifest.csv")
    assert len(loaded.entries) == len(man.entries)
    for a, b in zip(man.entries, loaded.entries):
        assert (a.source, a.path, a.label, a.gamma, a.quality, a.attack, a.split) == \
               (b.source, b.path, b.label, b.gamma, b.quality, b.attack, b.split)


def test_manifest_validation_rules():
    with pytest.raises(ValueError):
        DatasetManifest([ManifestEntry("s", "p", "enhanced")]).validate()
    with pytest.raises(ValueError):
        DatasetManifest([ManifestEntry("s", "p", "original", gamma=0.6)]).validate()
    with pytest.raises(ValueError):
        DatasetManifest([
            ManifestEntry("s", "p1", "original", split="train"),
            ManifestEntry("s", "p2", "original", split="test"),
        ]).validate()


def test_split_source_disjoint_and_deterministic():
    entries = []
    for i in range(20):
        entries.append(ManifestEntry(f"src{i}", f"o{i}", "original"))
        entries.append(ManifestEntry(f"src{i}", f"e{i}", "enhanced", gamma=0.6))
    man = DatasetManifest(entries)
    s1 = split(man, 3, (8, 2, 10))
    s2 = split(man, 3, (8, 2, 10))
    for a, b in zip(s1.entries, s2.entries):
        assert a.split == b.split
    per_split = {}
    for e in s1.entries:
        per_split.setdefault(e.split, set()).add(e.source)
    assert len(per_split["train"]) == 8
    assert len(per_split["val"]) == 2
    assert len(per_split["test"]) == 10
    assert not (per_split["train"] & per_split["test"])
    assert not (per_split["train"] & per_split["val"])
    # pairs stay together by construction
    for e in s1.entries:
        assert e.split == [x for x in s1.entries if x.source == e.source][0].split


def test_split_sizes_exceed_data():
    entries = [ManifestEntry(f"s{i}", f"p{i}", "original") for i in range(5)]
    with pytest.raises(SizesExceedData):
        split(DatasetManifest(entries), 0, (4, 1, 1))


def test_attack_dither_properties():
    img = gamma_correct(synth_patch(3, 64, 64, 2.0), 0.6)
    a1 = attack_dither(img, 7)
    a2 = attack_dither(img, 7)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, attack_dither(img, 8))
    diff = np.abs(a1.astype(int) - img.astype(int))
    assert diff.max() <= 1
    assert diff.mean() <= 1.0


def test_attack_dither_reduces_gap_count():
    reduced = 0
    trials = 300
    for i in range(trials):
        img = synth_patch(40_000 + i, 64, 64, 2.0)
        enh = gamma_correct(img, 0.6)
        att = attack_dither(enh, 60_000 + i)
        if count_gap_bins(histogram(att)).gap_count < count_gap_bins(histogram(enh)).gap_count:
            reduced += 1
    assert reduced / trials >= 0.90


def _manifest_on_disk(tmp_path, n=25, patch=16):
    entries = []
    for i in range(n):
        img = synth_patch(i, patch, patch, 1.0)
        p0 = tmp_path / f"o{i}.pgm"
        save_pgm(img, p0)
        entries.append(ManifestEntry(f"s{i}", str(p0), "original", split="train"))
        p1 = tmp_path / f"e{i}.pgm"
        save_pgm(gamma_correct(img, 0.6), p1)
        entries.append(ManifestEntry(f"s{i}", str(p1), "enhanced", gamma=0.6, split="train"))
    return DatasetManifest(entries)


def test_batch_iter_sizes_and_final_short_batch(tmp_path):
    man = _manifest_on_disk(tmp_path, n=25)  # 50 entries
    sizes = [len(y) for _, y in batch_iter(man, "train", 20, seed=0, epoch=0)]
    assert sizes == [20, 20, 10]


def test_batch_iter_deterministic_per_epoch(tmp_path):
    man = _manifest_on_disk(tmp_path, n=10)
    a = [y.tolist() for _, y in batch_iter(man, "train", 8, seed=1, epoch=0)]
    b = [y.tolist() for _, y in batch_iter(man, "train", 8, seed=1, epoch=0)]
    c = [y.tolist() for _, y in batch_iter(man, "train", 8, seed=1, epoch=1)]
    assert a == b
    assert a != c


def test_batch_iter_pixel_scaling(tmp_path):
    man = _manifest_on_disk(tmp_path, n=4)
    x, y = next(batch_iter(man, "train", 8, seed=0, epoch=0, mode="pixel"))
    assert x.dtype == np.float32 and x.shape[1] == 1
    assert 0.0 <= x.min() and x.max() <= 1.0
    assert set(y.tolist()) <= {0, 1}


def test_batch_iter_histogram_rows_sum_to_one(tmp_path):
    man = _manifest_on_disk(tmp_path, n=6)
    x, _ = next(batch_iter(man, "train", 12, seed=0, epoch=0, mode="histogram"))
    assert x.shape[1:] == (1, 1, 256)
    assert np.abs(x.sum(axis=3) - 1.0).max() < 1e-6


def test_batch_iter_empty_split(tmp_path):
    man = _manifest_on_disk(tmp_path, n=2)
    with pytest.raises(EmptySplit):
        next(batch_iter(man, "test", 4, seed=0, epoch=0))


def test_jpeg_pipeline_order_matters(tmp_path):
    # prejpeg means compression happens before enhancement, not after
    img = synth_patch(1, 16, 16, 1.0)
    a = gamma_correct(jpeg_roundtrip(img, 50), 0.6)
    b = jpeg_roundtrip(gamma_correct(img, 0.6), 50)
    assert not np.array_equal(a, b)
