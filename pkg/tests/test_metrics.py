import json
import math

import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from invmihnet.coupling import DenseSubnet, SubnetConfig
from invmihnet.metrics import EvalReport, _ssim_map, compatible_size, count_params, evaluate, make_sets, psnr, ssim
from invmihnet.model import InvMIHNet, ModelConfig
from invmihnet.transforms import MosaicLayout

from .helpers import randomize

TINY = ModelConfig(2, 2, iir_blocks=1, iih_blocks=1, subnet=SubnetConfig(n_layers=2, growth_channels=8))


def rand(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_psnr_examples():
    x = rand(1, 3, 16, 16) * 0.9
    assert psnr(x, x) == math.inf
    assert abs(psnr(x, x + 1 / 255) - 48.1308) < 1e-3
    assert abs(psnr(x, x + 0.5) - 6.0206) < 1e-3
    assert abs(psnr(x, x + 1 / 255) - 20 * math.log10(255)) < 1e-9
    with pytest.raises(ValueError):
        psnr(x, x[..., :8])


def test_psnr_monotone_in_error():
    x = rand(1, 3, 16, 16)
    noise = rand(1, 3, 16, 16, seed=1) - 0.5
    values = [psnr(x, x + s * noise) for s in (1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert psnr(x, x + 1e-9 * noise) < math.inf


def test_ssim_examples():
    x = rand(1, 3, 24, 24)
    assert ssim(x, x) == 1.0
    expected = 1e-4 / (1 + 1e-4)
    got = ssim(torch.zeros(1, 3, 16, 16), torch.ones(1, 3, 16, 16))
    assert abs(got - expected) < 1e-7
    assert abs(got - 9.999e-5) < 1e-7


def test_ssim_symmetry_and_errors():
    a, b = rand(2, 3, 20, 20), rand(2, 3, 20, 20, seed=1)
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-15
    with pytest.raises(ValueError):
        ssim(a, b[..., :10])
    with pytest.raises(ValueError):
        ssim(a[..., :10, :10], b[..., :10, :10])


def test_ssim_matches_reference_implementation():
    a, b = rand(1, 3, 32, 32), rand(1, 3, 32, 32, seed=2)
    b = 0.7 * a + 0.3 * b
    ref = np.mean([
        structural_similarity(
            a[0, c].numpy(), b[0, c].numpy(), data_range=1.0, gaussian_weights=True,
            sigma=1.5, use_sample_covariance=False,
        )
        for c in range(3)
    ])
    # the reference filters with reflection and then drops a 5-pixel border,
    # which leaves exactly the valid region used here
    assert abs(ssim(a, b) - ref) < 1e-10


def test_ssim_shift_behaviour():
    a, b = 0.1 + 0.5 * rand(1, 3, 24, 24), 0.1 + 0.5 * rand(1, 3, 24, 24, seed=3)
    # the contrast-structure part ignores a common offset exactly
    _, cs0 = _ssim_map(a, b, 1.0)
    _, cs1 = _ssim_map(a + 0.3, b + 0.3, 1.0)
    assert (cs0 - cs1).abs().max() < 1e-6
    assert ssim(a + 0.3, a + 0.3) == 1.0


def test_count_params():
    assert count_params(DenseSubnet(3, 8, SubnetConfig(n_layers=1))) == 224
    empty = InvMIHNet(ModelConfig(2, 2, iir_blocks=0, iih_blocks=0))
    assert count_params(empty) == 0
    model = InvMIHNet(TINY)
    assert count_params([model.iir, model.iih]) == count_params(model) == sum(p.numel() for p in model.parameters())
    assert count_params([model, model]) == count_params(model)


def test_compatible_size_and_sets(tmp_path):
    assert compatible_size(64, 64, MosaicLayout(3, 3)) == (60, 60)
    assert compatible_size(65, 64, MosaicLayout(2, 4)) == (64, 64)
    files = [tmp_path / f"{k:02d}.png" for k in range(11)]
    sets = make_sets(files, 4, seed=0)
    assert len(sets) == 2
    assert sorted(map(tuple, sets)) == [tuple(files[0:5]), tuple(files[5:10])]
    assert make_sets(files, 4, 0) == make_sets(files, 4, 0)


def test_evaluate_identity_stub(eval_dir):
    model = InvMIHNet(TINY)
    report = evaluate(model, eval_dir, seed=0, latent_mode="zeros")
    assert report.image_sets == 2 and report.num_secrets == 4
    # cover PNGs are on the 8-bit grid, so the zero-init stego is the cover itself
    assert report.cover_psnr_mean == math.inf and report.cover_ssim_mean == 1.0
    assert math.isfinite(report.secret_psnr_mean) and report.secret_psnr_mean < 30
    assert report.parameters == count_params(model)
    assert report.seconds_per_set is None


def test_evaluate_is_deterministic_and_leaves_model_alone(eval_dir, tmp_path):
    model = randomize(InvMIHNet(TINY, seed=0), seed=2)
    model.train()
    before = {k: v.clone() for k, v in model.state_dict().items()}
    r1 = evaluate(model, eval_dir, seed=3)
    r2 = evaluate(model, eval_dir, seed=3)
    assert r1 == r2
    assert model.training
    assert all(torch.equal(before[k], v) for k, v in model.state_dict().items())
    r1.save(tmp_path / "a.json")
    r2.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    r3 = evaluate(model, eval_dir, seed=4)
    assert r3.secret_psnr_mean != r1.secret_psnr_mean


def test_report_roundtrip_with_infinity(tmp_path):
    rep = EvalReport(
        dataset="x", num_secrets=4, m=2, n=2, image_sets=1, parameters=10,
        cover_psnr_mean=math.inf, cover_psnr_std=0.0, cover_ssim_mean=1.0, cover_ssim_std=0.0,
        secret_psnr_mean=12.5, secret_psnr_std=0.5, secret_ssim_mean=0.3, secret_ssim_std=0.01,
        seconds_per_set=None, seed=0, latent_mode="normal",
    )
    rep.save(tmp_path / "r.json")
    json.loads((tmp_path / "r.json").read_text())  # strict JSON, no bare Infinity
    assert EvalReport.load(tmp_path / "r.json") == rep
    assert "inf" in rep.table()


def test_evaluate_center_crops_odd_sizes(tmp_path, caplog):
    from invmihnet.sample_data import write_sample_corpus

    write_sample_corpus(tmp_path, count=10, size=64, seed=2)
    report = evaluate(InvMIHNet(ModelConfig(3, 3, 1, 1, subnet=SubnetConfig(2, 8))), tmp_path, latent_mode="zeros")
    assert report.image_sets == 1
    assert any("center-cropping" in r.getMessage() for r in caplog.records)
