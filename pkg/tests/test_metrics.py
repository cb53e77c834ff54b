"""Quality metric oracles: closed forms, invariances, and the batch harness."""
import os

import numpy as np
import pytest

from clearsea import imageio, metrics
from clearsea.errors import DataError


# -- psnr -----------------------------------------------------------------------


def test_psnr_identity_hits_cap():
    a = np.random.default_rng(0).random((32, 32, 3))
    assert metrics.psnr(a, a) == metrics.PSNR_CAP == 99.0


def test_psnr_uniform_offset_exact():
    # MSE = 0.01 everywhere, so 10*log10(1/0.01) = 20 dB on the nose
    base = np.full((32, 32, 3), 0.5)
    assert metrics.psnr(base, base + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_symmetric_and_monotone_in_noise():
    rng = np.random.default_rng(1)
    base = np.full((32, 32, 3), 0.5)
    noise = rng.standard_normal((32, 32, 3))
    assert metrics.psnr(base, base + 0.1) == metrics.psnr(base + 0.1, base)
    vals = [metrics.psnr(base, np.clip(base + amp * noise, 0, 1)) for amp in (0.05, 0.1, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        metrics.psnr(np.zeros((8, 8, 3)), np.zeros((8, 4, 3)))


# -- ssim -----------------------------------------------------------------------


def test_ssim_identity_and_constant_pair():
    a = np.random.default_rng(0).random((16, 16, 3))
    assert metrics.ssim(a, a) == pytest.approx(1.0, abs=1e-6)
    c1, c2 = np.full((16, 16, 3), 0.2), np.full((16, 16, 3), 0.8)
    s = metrics.ssim(c1, c2)
    assert s == pytest.approx(0.470666078517865, abs=1e-5)
    assert s == pytest.approx(0.4709, abs=1e-3)


def test_ssim_is_plain_float():
    a = np.random.default_rng(2).random((12, 12, 3))
    assert isinstance(metrics.ssim(a, a), float)


# -- uiqm -----------------------------------------------------------------------


def test_uiqm_constant_gray_is_zero():
    for level in (0.5, 0.123):
        u = metrics.uiqm(np.full((32, 32, 3), level))
        assert u.uicm == 0.0 and u.uism == 0.0 and u.uiconm == 0.0 and u.value == 0.0


def test_uiqm_texture_beats_flat():
    yy, xx = np.mgrid[0:64, 0:64]
    checker = ((yy // 4 + xx // 4) % 2).astype(np.float64)
    img = np.stack([checker] * 3, axis=-1) * 0.6 + 0.2
    assert metrics.uiqm(img).value > 0.0


def test_uism_positive_on_smooth_gradient():
    # a diagonal ramp has nonzero sobel response at every interior pixel,
    # so whole blocks pass the min>0 gate (a checkerboard would not: its
    # flat cell interiors zero out at least one pixel per block)
    yy, xx = np.mgrid[0:64, 0:64]
    ramp = 0.2 + 0.6 * (yy + xx) / 126.0
    img = np.stack([ramp] * 3, axis=-1)
    assert metrics.uiqm(img).uism > 0.0


def test_uiqm_flip_invariant_on_aligned_sizes():
    img = np.random.default_rng(3).random((64, 64, 3))
    assert metrics.uiqm(img).value == pytest.approx(metrics.uiqm(img[:, ::-1]).value, abs=1e-12)


def test_uiqm_minimum_size():
    with pytest.raises(ValueError):
        metrics.uiqm(np.zeros((8, 8, 3)))


def test_uiqm_components_combine_linearly():
    img = np.random.default_rng(4).random((32, 32, 3))
    u = metrics.uiqm(img)
    c1, c2, c3 = metrics.UIQM_COEFFS
    assert u.value == pytest.approx(c1 * u.uicm + c2 * u.uism + c3 * u.uiconm, rel=1e-12)


# -- uciqe and the color space ------------------------------------------------------


def test_uciqe_constant_gray_is_zero():
    # the difference-form neutral axis makes this exact, not approximate
    assert metrics.uciqe(np.full((32, 32, 3), 0.5)) == 0.0
    assert metrics.uciqe(np.full((24, 40, 3), 0.123)) == 0.0


def test_gray_maps_to_zero_chroma_exactly():
    lab = metrics.rgb_to_lab(np.full((4, 4, 3), 0.37))
    assert np.all(lab[..., 1] == 0.0) and np.all(lab[..., 2] == 0.0)


def test_lab_round_trip():
    img = np.random.default_rng(5).random((16, 16, 3))
    back = metrics.lab_to_rgb(metrics.rgb_to_lab(img))
    assert np.abs(back - img).max() < 1e-9


def test_uciqe_grows_with_chroma_spread():
    rng = np.random.default_rng(6)
    theta = rng.uniform(0, 2 * np.pi, (32, 32))
    L = np.full((32, 32), 60.0)
    for r_small, r_big in [(5.0, 15.0), (10.0, 25.0)]:
        small = metrics.lab_to_rgb(np.stack([L, r_small * np.cos(theta), r_small * np.sin(theta)], axis=-1))
        big = metrics.lab_to_rgb(np.stack([L, r_big * np.cos(theta), r_big * np.sin(theta)], axis=-1))
        assert metrics.uciqe(big) > metrics.uciqe(small)


def test_uciqe_flip_invariant():
    img = np.random.default_rng(7).random((64, 64, 3))
    assert metrics.uciqe(img) == pytest.approx(metrics.uciqe(img[:, ::-1]), abs=1e-12)


def test_metrics_finite_on_random_inputs():
    rng = np.random.default_rng(8)
    for _ in range(10):
        im = rng.random((int(rng.integers(16, 40)), int(rng.integers(16, 40)), 3))
        assert np.isfinite(metrics.uiqm(im).value)
        assert np.isfinite(metrics.uciqe(im))


def test_non_finite_input_rejected():
    bad = np.full((16, 16, 3), np.nan)
    with pytest.raises(ValueError):
        metrics.uciqe(bad)
    with pytest.raises(ValueError):
        metrics.psnr(bad, bad)


# -- batch harness -----------------------------------------------------------------


@pytest.fixture(scope="module")
def eval_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pairs")
    rng = np.random.default_rng(9)
    lines = []
    for i in range(4):
        im = rng.random((24, 24, 3))
        imageio.save_rgb(os.path.join(root, f"im{i}.png"), im)
        lines.append(f"pair.im{i}.image = im{i}.png")
        lines.append(f"pair.im{i}.reference = im{i}.png")
    (root / "pairs.txt").write_text("\n".join(lines) + "\n")
    return root


def test_evaluate_identical_pairs(eval_dir, tmp_path):
    out = str(tmp_path / "report.csv")
    rep = metrics.evaluate_folder(str(eval_dir / "pairs.txt"), ["psnr", "ssim"], out)
    assert rep.means["psnr"] == 99.0
    assert rep.means["ssim"] == pytest.approx(1.0, abs=1e-6)
    lines = open(out).read().splitlines()
    assert lines[0] == "id,psnr,ssim"
    assert lines[-1].startswith("mean,")
    assert len(lines) == 1 + 4 + 1
    # the mean row restates the column mean bit-for-bit (repr round-trip)
    per = [float(ln.split(",")[1]) for ln in lines[1:-1]]
    assert float(lines[-1].split(",")[1]) == pytest.approx(np.mean(per), abs=1e-12)


def test_evaluate_no_reference_metrics_skip_reference(eval_dir):
    rep = metrics.evaluate_folder(str(eval_dir / "pairs.txt"), ["uiqm", "uciqe"])
    assert set(rep.means) == {"uiqm", "uciqe"}
    assert all(np.isfinite(v) for v in rep.means.values())


def test_evaluate_unknown_metric(eval_dir):
    with pytest.raises(ValueError):
        metrics.evaluate_folder(str(eval_dir / "pairs.txt"), ["psnr", "niqe"])


def test_evaluate_missing_reference(tmp_path):
    rng = np.random.default_rng(10)
    imageio.save_rgb(str(tmp_path / "a.png"), rng.random((16, 16, 3)))
    (tmp_path / "pairs.txt").write_text("pair.a.image = a.png\n")
    with pytest.raises(DataError):
        metrics.evaluate_folder(str(tmp_path / "pairs.txt"), ["psnr"])
    # but no-reference metrics are fine with the same manifest
    rep = metrics.evaluate_folder(str(tmp_path / "pairs.txt"), ["uciqe"])
    assert "a" in rep.per_image


def test_evaluate_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        metrics.evaluate_folder(str(tmp_path / "missing.txt"), ["psnr"])
    bad = tmp_path / "bad.txt"
    bad.write_text("pair.x.image a.png\n")
    with pytest.raises(DataError):
        metrics.evaluate_folder(str(bad), ["psnr"])
    wrongkey = tmp_path / "wrong.txt"
    wrongkey.write_text("thing.x.image = a.png\n")
    with pytest.raises(DataError):
        metrics.evaluate_folder(str(wrongkey), ["psnr"])
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing here\n")
    with pytest.raises(DataError):
        metrics.evaluate_folder(str(empty), ["psnr"])
