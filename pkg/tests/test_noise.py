import numpy as np
import pytest

from ossikit.errors import InvalidInputError
from ossikit.forward import ScenePattern, SubImageSet, acquire_set
from ossikit.image import load_imf1, normalize
from ossikit.noise import (FIELD_FLOOR, ArtifactField, AugmentConfig, DatasetManifest,
                           augment_field, build_dataset, build_field_bank, corrupt,
                           extract_artifact_field, simulate_bubble_free_set)
from ossikit.bubbles import SceneConfig
from ossikit.reconstruct import ReconstructionKind

TWO = (0.0, np.pi)


def _uniform_2p_set(value=0.6, h=16, w=12):
    f0 = np.full((h, w), 0.5 + value, dtype=np.float32)
    f1 = np.full((h, w), 0.5 - value, dtype=np.float32)
    return SubImageSet(np.stack([f0, f1]), np.array(TWO))


def test_extract_uniform_reconstruction_gives_unit_field():
    fld = extract_artifact_field(_uniform_2p_set(), "2p")
    assert np.allclose(fld.field, 1.0, atol=1e-6)


def test_extract_2p_constant_scene_gives_sine_line_field():
    h, w, v, c = 64, 10, 1.0 / 8.0, 0.5
    scene = ScenePattern(np.full((h, w), c, np.float32), np.full((h, w), 0.3, np.float32), v)
    sset = acquire_set(scene, TWO)
    fld = extract_artifact_field(sset, ReconstructionKind.TWO_PHASE)
    envelope = np.abs(np.sin(2.0 * np.pi * v * np.arange(h)))
    expected = np.maximum(envelope / envelope.mean(), FIELD_FLOOR)
    assert np.allclose(fld.field, expected[:, None], atol=1e-4)


def test_extract_sht_with_drift_gives_smooth_nonunit_field():
    rng = np.random.default_rng(3)
    sset = simulate_bubble_free_set(64, 48, "sht", rng, drift=1.1, phase_error=0.0)
    fld = extract_artifact_field(sset, "sht")
    assert abs(float(fld.field.mean(dtype=np.float64)) - 1.0) < 1e-6
    assert float(fld.field.std()) > 1e-3  # genuinely non-unit
    # smooth away from the FFT boundary ringing: neighbouring rows stay close
    interior = np.abs(np.diff(fld.field.astype(np.float64), axis=0))[6:-6]
    assert interior.max() < 0.15


def test_extract_rejects_zero_reconstruction():
    frames = np.zeros((2, 8, 8), dtype=np.float32)
    sset = SubImageSet(frames, np.array(TWO))
    with pytest.raises(InvalidInputError):
        extract_artifact_field(sset, "2p")


def test_extract_mean_one_invariant():
    for kind in ("2p", "sht"):
        for seed in range(4):
            rng = np.random.default_rng(seed)
            sset = simulate_bubble_free_set(48, 40, kind, rng)
            fld = extract_artifact_field(sset, kind)
            mean = float(fld.field.astype(np.float64).mean())
            assert abs(mean - 1.0) < 1e-6
            assert fld.field.min() > 0.0


def _sine_field(h=128, w=16, periods=4.0, amp=0.5):
    y = np.arange(h)
    col = 1.0 + amp * np.sin(2.0 * np.pi * periods * y / h)
    return ArtifactField(np.repeat(col[:, None], w, axis=1).astype(np.float32),
                         ReconstructionKind.TWO_PHASE)


def _crossings_per_column(field):
    centered = field.astype(np.float64) - field.mean(dtype=np.float64)
    return int(np.sum(np.diff(np.signbit(centered[:, 0])) != 0))


def test_augment_identity_leaves_field_unchanged():
    fld = _sine_field()
    rng = np.random.default_rng(0)
    out, params = augment_field(fld, rng, AugmentConfig(crop_range=(1.0, 1.0), scale_range=(1.0, 1.0)))
    assert params["crop"] == [0, 0, 128, 16]
    assert np.allclose(out.field, fld.field, atol=1e-5)


def test_augment_zero_strength_erases_artifact():
    fld = _sine_field()
    out, params = augment_field(fld, np.random.default_rng(1),
                                AugmentConfig(crop_range=(0.8, 1.0), scale_range=(0.0, 0.0)))
    assert params["scale"] == 0.0
    assert np.array_equal(out.field, np.ones_like(fld.field))


def test_augment_half_crop_halves_apparent_frequency():
    fld = _sine_field(periods=8.0)
    before = _crossings_per_column(fld.field)
    out, _ = augment_field(fld, np.random.default_rng(2),
                           AugmentConfig(crop_range=(0.5, 0.5), scale_range=(1.0, 1.0)))
    after = _crossings_per_column(out.field)
    assert abs(after - before / 2) <= 2


def test_augment_oversampled_bank_doubles_apparent_frequency():
    # full-window crop of a 2x-oversampled field squeezed onto the target
    fld = _sine_field(h=256, periods=8.0)
    out, _ = augment_field(fld, np.random.default_rng(3),
                           AugmentConfig(crop_range=(1.0, 1.0), scale_range=(1.0, 1.0)),
                           target_hw=(128, 16))
    assert out.field.shape == (128, 16)
    before_per_row = _crossings_per_column(fld.field) / 256.0
    after_per_row = _crossings_per_column(out.field) / 128.0
    assert abs(after_per_row - 2.0 * before_per_row) <= 2.0 / 128.0


def test_augment_respects_floor():
    fld = _sine_field(amp=0.9)
    out, _ = augment_field(fld, np.random.default_rng(4),
                           AugmentConfig(crop_range=(1.0, 1.0), scale_range=(2.0, 2.0)))
    assert out.field.min() >= np.float32(FIELD_FLOOR)


def test_corrupt_unit_field_is_normalize():
    rng = np.random.default_rng(5)
    clean = rng.random((32, 24), dtype=np.float32)
    fld = ArtifactField(np.ones((32, 24), dtype=np.float32), "2p")
    assert np.array_equal(corrupt(clean, fld), normalize(clean))


def test_corrupt_zero_clean_stays_zero():
    fld = ArtifactField(np.full((8, 8), 1.3, dtype=np.float32), "sht")
    out = corrupt(np.zeros((8, 8), dtype=np.float32), fld)
    assert np.array_equal(out, np.zeros((8, 8), dtype=np.float32))


def test_corrupt_matches_elementwise_oracle():
    h, w = 40, 30
    clean = np.linspace(0, 1, h * w, dtype=np.float32).reshape(h, w)
    col = 1.0 + 0.4 * np.abs(np.sin(2 * np.pi * 3 * np.arange(h) / h))
    field = np.repeat(col[:, None], w, axis=1).astype(np.float32)
    prod = (clean.astype(np.float64) * field.astype(np.float64)).astype(np.float32)
    assert np.array_equal(corrupt(clean, ArtifactField(field, "2p")), normalize(prod))


def test_corrupt_scalar_field_scaling_cancels():
    rng = np.random.default_rng(6)
    clean = rng.random((16, 16), dtype=np.float32)
    field = (1.0 + 0.3 * rng.random((16, 16))).astype(np.float32)
    a = corrupt(clean, ArtifactField(field, "2p"))
    b = corrupt(clean, ArtifactField(field * np.float32(2.0), "2p"))
    assert np.allclose(a, b, atol=1e-6)


def test_corrupt_rejects_dim_mismatch():
    with pytest.raises(InvalidInputError):
        corrupt(np.zeros((4, 4), np.float32), ArtifactField(np.ones((4, 5), np.float32), "2p"))


def _scene_cfg(dims=32):
    return SceneConfig(height=dims, width=dims, count_range=(1, 4), scale_range=(4.0, 9.0),
                       background=0.05, seed=0)


def test_build_dataset_counts_and_balance(tmp_path):
    bank = build_field_bank(2, 32, 32, seed=9)
    man = build_dataset(_scene_cfg(), bank, count=8, split=0.75, seed=1, out_dir=tmp_path / "d")
    assert len(man.shard_items("train")) == 6
    assert len(man.shard_items("test")) == 2
    bal = man.balance()
    assert bal["train"] == {"2p": 3, "sht": 3}
    assert bal["test"] == {"2p": 1, "sht": 1}
    for it in man.items:
        assert (tmp_path / "d" / it["clean"]).is_file()
        assert (tmp_path / "d" / it["noisy"]).is_file()
        img = load_imf1(tmp_path / "d" / it["noisy"])
        assert img.shape == (32, 32)
        assert 0.0 <= img.min() and img.max() <= 1.0


def test_build_dataset_deterministic(tmp_path):
    bank = build_field_bank(2, 32, 32, seed=9)
    m1 = build_dataset(_scene_cfg(), bank, 6, 0.5, seed=4, out_dir=tmp_path / "a")
    m2 = build_dataset(_scene_cfg(), bank, 6, 0.5, seed=4, out_dir=tmp_path / "b")
    assert m1.items == m2.items
    for it in m1.items:
        assert (tmp_path / "a" / it["noisy"]).read_bytes() == (tmp_path / "b" / it["noisy"]).read_bytes()
        assert (tmp_path / "a" / it["clean"]).read_bytes() == (tmp_path / "b" / it["clean"]).read_bytes()


def test_build_dataset_dry_run_no_pixels(tmp_path):
    man = build_dataset(_scene_cfg(), [], count=100, split=0.8, seed=2,
                        out_dir=tmp_path / "dry", dry_run=True)
    assert man.dry_run
    assert len(man.shard_items("train")) == 80
    assert not (tmp_path / "dry" / "train").exists()
    assert (tmp_path / "dry" / "manifest.json").is_file()
    back = DatasetManifest.load(tmp_path / "dry" / "manifest.json")
    assert back.items == man.items


def test_build_dataset_requires_both_kinds():
    bank = [f for f in build_field_bank(1, 16, 16, seed=3)
            if f.source_kind is ReconstructionKind.TWO_PHASE]
    with pytest.raises(InvalidInputError):
        build_dataset(_scene_cfg(16), bank, 4, 0.5, seed=0)


def test_manifest_validation_rejects_imbalance():
    man = build_dataset(_scene_cfg(16), [], count=6, split=0.5, seed=0, dry_run=True)
    man.items[1]["kind"] = "2p"  # now 3-0 in train
    with pytest.raises(InvalidInputError):
        man.validate()
