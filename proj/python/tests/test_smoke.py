import math

import numpy as np
import pytest

import istanet


def test_sampling_matrix_is_row_orthonormal():
    mm = istanet.gen_measurement_matrix(istanet.measurements_for_ratio(0.25), 1089, 3)
    assert mm.phi.shape == (272, 1089)
    np.testing.assert_allclose(mm.phi @ mm.phi.T, np.eye(272), atol=1e-10)
    x = np.random.default_rng(0).random((1089, 4))
    np.testing.assert_allclose(mm.measure(x), mm.phi @ x, atol=1e-12)


def test_qinit_matches_numpy_least_squares():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((30, 80)), rng.standard_normal((10, 80))
    ref = np.linalg.lstsq(y.T, x.T, rcond=None)[0].T
    np.testing.assert_allclose(istanet.compute_qinit(x, y), ref, atol=1e-10)


def test_soft_threshold_and_prox():
    out = istanet.soft_threshold(np.array([-2.0, -0.1, 0.0, 0.3, 1.5]), 0.5)
    np.testing.assert_allclose(out, [-1.5, 0.0, 0.0, 0.0, 1.0])
    r = np.random.default_rng(2).standard_normal(64)
    c = istanet.dct2(istanet.prox_dct(r, 0.3, 8).reshape(8, 8)).ravel()
    wr = istanet.dct2(r.reshape(8, 8)).ravel()
    np.testing.assert_allclose(c, np.sign(wr) * np.maximum(np.abs(wr) - 0.3, 0), atol=1e-12)


def test_ista_objective_never_rises():
    mm = istanet.gen_measurement_matrix(32, 64, 12)
    x0 = istanet.idct2(np.diag([3.0, 0, 0, 1.0, 0, 0, 0, 0])).ravel()
    x, trace = istanet.ista_solve(mm.phi @ x0, mm, lam=6e-3, max_iters=500, tol=0.0)
    assert len(trace) == 501
    assert all(b <= a + 1e-10 for a, b in zip(trace, trace[1:]))
    assert np.linalg.norm(x - x0) / np.linalg.norm(x0) < 2e-2


def test_model_checkpoint_round_trip(tmp_path):
    mm = istanet.gen_measurement_matrix(109, 1089, 4)
    model = istanet.init_model("istanet+", 2, 4, q=mm.phi.T, seed=5, init="he")
    y = np.random.default_rng(3).standard_normal((109, 2))
    path = str(tmp_path / "m.istn")
    istanet.save_model(path, model)
    back = istanet.load_model(path)
    assert back.variant == "istanet+" and back.phases == 2
    assert np.array_equal(back.reconstruct(mm, y), model.reconstruct(mm, y))


def test_short_training_run_and_image_reconstruction():
    rng = np.random.default_rng(4)
    mm = istanet.gen_measurement_matrix(109, 1089, 6)
    rows, cols = np.mgrid[0:33, 0:33]
    blocks = [(0.5 + 0.4 * np.sin(a * rows + b * cols)).ravel() for a, b in rng.uniform(0, 0.3, (160, 2))]
    x = np.stack(blocks, axis=1)
    model, log, held = istanet.train(x, mm, phases=2, filters=4, epochs=2, batch=32, holdout=0.1, seed=1)
    assert [e["epoch"] for e in log] == [1, 2]
    assert log[1]["total_loss"] < log[0]["total_loss"]
    assert all(math.isfinite(e["total_loss"]) for e in log)
    assert len(held) == 16
    image = 255 * (0.5 + 0.4 * np.sin(0.1 * np.mgrid[0:40, 0:50][0]))
    rec = istanet.reconstruct_image(image, mm, model)
    assert rec.shape == (40, 50)
    assert rec.min() >= 0 and rec.max() <= 255
    assert istanet.psnr(image, rec) > 10


def test_variance_ratio_scalar_identity():
    one = np.ones((1, 1))
    alpha, se = istanet.relu_variance_ratio(one, one, 1.0, 200_000, seed=7)
    assert abs(alpha - (0.5 - 1 / (2 * math.pi))) < 4 * se


def test_errors_surface_as_python_exceptions():
    with pytest.raises(istanet.DomainError):
        istanet.relu_variance_ratio(np.ones((1, 1)), np.ones((1, 1)), 0.0, 20_000)
    with pytest.raises(istanet.Error):
        istanet.load_model("/nonexistent/model.istn")
