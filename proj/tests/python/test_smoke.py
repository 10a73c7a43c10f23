import math
import os

import numpy as np
import pytest

import zigan_forge as zf

FONT = os.environ.get("ZIGAN_TEST_FONT", "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf")


def blank(n=8):
    return np.ones((n, n, 3), dtype=np.float32)


def test_normalize_round_trip_and_range():
    raw = np.arange(256, dtype=np.uint8).reshape(16, 16)
    px = zf.normalize_image(raw)
    assert px.shape == (16, 16, 3)
    assert px.dtype == np.float32
    assert px.min() == -1.0 and px.max() == 1.0
    assert np.array_equal(zf.denormalize_image(px)[:, :, 0], raw)
    with pytest.raises(zf.ZiganError) as info:
        zf.normalize_image(np.full((2, 2), 300.0))
    assert info.value.code == "BadRange"


def test_render_glyph_and_missing_glyph():
    img = zf.render_glyph(FONT, ord("A"), 64)
    assert img.shape == (64, 64, 3)
    assert -1.0 <= img.min() < 0.0 and img.max() == 1.0
    assert zf.binarize(img).any()
    assert zf.has_glyph(FONT, ord("A"))
    assert not zf.has_glyph(FONT, 0x6C38)
    with pytest.raises(zf.ZiganError) as info:
        zf.render_glyph(FONT, 0x6C38, 64)
    assert info.value.code == "MissingGlyph"


def test_split_is_seeded_and_disjoint():
    corpus = list(range(0x4E00, 0x4E00 + 50))
    train, test = zf.split_codepoints(corpus, 10, 7)
    assert len(train) == 10 and len(test) == 40
    assert not set(train) & set(test)
    assert sorted(train + test) == corpus
    assert zf.split_codepoints(corpus, 10, 7) == (train, test)


def test_mmd_hand_value_and_identity():
    assert abs(zf.mk_mmd_sq([[0.0]], [[1.0]], [1.0]) - (2 - 2 * math.exp(-0.5))) <= 1e-6
    assert abs(zf.mk_mmd_sq([[0.0]], [[1.0]], [1.0]) - 0.786939) <= 1e-6
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 3))
    assert zf.mk_mmd_sq(a, a, zf.median_heuristic_bank(np.vstack([a, a]))) <= 1e-10
    assert abs(zf.gaussian_kernel([0.0, 0.0], [0.0, 0.0], 1.0) - 1.0) <= 1e-15


def test_loss_algebra_and_schedule():
    unit = {"gan": 1.0, "consistency": 1.0, "alignment": 1.0, "style": 1.0}
    assert zf.weighted_total(unit) == 35.0
    assert zf.total_losses(unit, unit) == 70.0
    assert [zf.lr_at(e) for e in (0, 500, 1000)] == [3e-4, 1.5e-4, 7.5e-5]
    with pytest.raises(zf.ZiganError):
        zf.weighted_total(unit, lambda1=-1.0)


def test_architecture_table():
    enc = zf.encoder_specs(256)
    assert [s["output_size"] for s in enc] == [128, 64, 32, 16, 8, 4, 2, 1]
    assert [s["out_channels"] for s in enc] == [64, 128, 256, 512, 512, 512, 512, 512]
    dec = zf.decoder_specs(256)
    assert dec[-1]["out_channels"] == 3
    assert 1024 in [s["in_channels"] for s in dec]


def test_cam_attention_contract():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(2, 4, 3, 3))
    w_avg, w_max = rng.normal(size=4), rng.normal(size=4)
    logit, per_map = zf.cam_attention(feats, w_avg, w_max)
    assert np.array_equal(per_map, (w_avg + w_max)[None, :, None, None] * feats)
    assert np.all((logit > 0) & (logit < 1))
    zero_logit, _ = zf.cam_attention(feats, np.zeros(4), np.zeros(4))
    assert np.all(zero_logit == 0.5)


def test_metrics():
    a = blank()
    a[1, 1] = a[1, 2] = -1.0
    b = blank()
    b[1, 2] = b[5, 5] = -1.0
    assert zf.iou(a, a) == 1.0
    assert abs(zf.iou(a, b) - 1.0 / 3.0) <= 1e-12
    assert zf.iou(blank(), blank()) == 1.0
    with pytest.raises(zf.ZiganError):
        zf.iou(blank(8), blank(9))

    assert abs(zf.frechet_distance([0.0], [[1.0]], [1.0], [[1.0]]) - 1.0) <= 1e-8
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(40, 3)), rng.normal(size=(40, 3))
    value, few = zf.fid_from_features(x, y)
    assert not few and value >= 0.0
    assert zf.fid_from_features(x[::-1].copy(), rng.permutation(y))[0] == value


def test_cli_help_and_config_errors(capfd):
    assert zf.cli(["--help"]) == 0
    out = capfd.readouterr().out
    for key in ("shots", "lambda4", "kernel_bank", "pool_universe", "workers"):
        assert key in out
    assert zf.cli(["--set", "no_such_key=1", "prepare"]) == 2
    assert "no_such_key" in capfd.readouterr().err
