import math

import numpy as np
import pytest

import deforma


def test_composite_conserves_mass():
    weights, residual = deforma.composite([0.5, 0.5, 1.0, 0.3])
    assert weights == [0.5, 0.25, 0.25, 0.0]
    assert residual == 0.0
    weights, residual = deforma.composite([0.2, 0.7])
    assert math.isclose(sum(weights) + residual, 1.0, abs_tol=1e-15)


def test_basis_identities():
    basis = deforma.synth_basis(3, vertices=64)
    mean = basis.mean_shape
    assert mean.shape == (64, 3)
    assert np.array_equal(basis.reconstruct([0.0] * 8, [0.0] * 4), mean)
    assert basis.reference_deformation([0.0] * 4, 5) == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        basis.reconstruct([0.0] * 3, [0.0] * 4)


def test_chamfer_is_directed():
    a = np.zeros((1, 3))
    b = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    assert deforma.chamfer(a, b) == 0.0
    assert deforma.chamfer(b, a) == 4.5


def test_render_round_trip(tmp_path):
    ckpt = str(tmp_path / "model.fp01")
    deforma.init_checkpoint(ckpt, seed=2)
    rgb, depth = deforma.render(ckpt, width=12, height=10)
    assert rgb.shape == (10, 12, 3)
    assert depth.shape == (10, 12)
    assert np.all((rgb >= 0) & (rgb <= 1))
    assert np.isfinite(depth[5, 6])
    again, _ = deforma.render(ckpt, width=12, height=10)
    assert np.array_equal(rgb, again)
    with pytest.raises(IOError):
        deforma.render(str(tmp_path / "missing.fp01"))


def test_hyperparameters_and_keys():
    h = deforma.training_hyperparams()
    assert h["field_lr"] == 2e-5 and h["discriminator_lr"] == 2e-4
    assert h["beta1"] == 0.0 and h["beta2"] == 0.9
    assert "w_3dmm" in deforma.fit_config_keys()


def test_tiny_fit_reports_finite_metrics(tmp_path):
    opts = {
        "steps": "2",
        "resolution": "8",
        "vertices": "64",
        "eval_poses": "1",
        "eval_expressions": "1",
        "pixel_rays": "8",
        "vertex_rays": "8",
        "imitation_points": "16",
        "smooth_points": "8",
    }
    report = deforma.fit_synthetic(opts, checkpoint=str(tmp_path / "fit.fp01"))
    assert report["steps"] == 2 and report["finite"]
    assert math.isfinite(report["heldout_psnr"])
    assert (tmp_path / "fit.fp01").exists()
    with pytest.raises(ValueError):
        deforma.fit_synthetic({"no_such_key": "1"})


def test_gradcheck_small():
    cases = deforma.gradcheck(params=5)
    assert cases and all(c["passed"] for c in cases)
