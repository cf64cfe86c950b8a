import math

import numpy as np
import pytest

import mpo


def small_setup():
    train = mpo.make_synthetic(32, 6, seed=1)
    spec = mpo.make_mlp((1, 6, 6), 2, hidden=[8])
    return train, spec


def test_plane_geometry():
    _, spec = small_setup()
    plane = mpo.init_plane(spec, seed=3, scale=0.2)
    n = spec.param_count
    assert plane.trainable_count() == 3 * n + 1
    right = plane.w_right
    assert abs(right @ plane.w_up) <= 1e-10 * (right @ right)
    assert np.linalg.norm(right) == pytest.approx(np.linalg.norm(plane.w_up), rel=1e-12)
    w = mpo.materialize(plane, 2.0, -1.0)
    expected = plane.w_origin + 0.2 * (2.0 * right - 1.0 * plane.w_up)
    np.testing.assert_allclose(w, expected, rtol=0, atol=1e-12)


def test_degenerate_direction_raises():
    with pytest.raises(mpo.MpoError):
        mpo.orthogonalize(np.array([1.0, 0.0]), np.array([2.0, 0.0]))


def test_train_and_grid():
    train, spec = small_setup()
    mask = mpo.checkerboard(3, 3)
    assert mask.to_array().shape == (3, 3)
    cfg = mpo.TrainConfig()
    cfg.iterations, cfg.batch_size, cfg.cells_per_update, cfg.lr, cfg.log_every = 20, 16, 8, 1e-2, 5
    plane, log = mpo.train(spec, train, mask, cfg)
    assert [r["iteration"] for r in log] == [1, 5, 10, 15, 20]
    assert all(r["ortho_residual"] <= 1e-8 for r in log)
    grid = mpo.eval_grid(plane, spec, train, 3, 3, max_examples=0)
    assert grid.loss.shape == (3, 3)
    black, white, diff = mpo.black_white_means(grid, mask)
    assert diff == pytest.approx(black - white)
    loss, acc = mpo.evaluate(spec, mpo.materialize(plane, 1.0, 2.0), train)
    assert loss == pytest.approx(grid.loss[2, 1], rel=1e-12)
    assert acc == pytest.approx(grid.accuracy[2, 1])


def test_dataset_from_numpy_and_snapshot(tmp_path):
    images = np.random.default_rng(0).random((4, 1, 3, 3))
    ds = mpo.Dataset(images, [0, 1, 1, 0], 2)
    assert len(ds) == 4
    np.testing.assert_array_equal(ds.images, images)
    spec = mpo.make_mlp((1, 3, 3), 2, hidden=[4])
    plane = mpo.init_plane(spec, seed=1)
    path = str(tmp_path / "p.mpo")
    mpo.save_plane(plane, path)
    back = mpo.load_plane(path)
    np.testing.assert_array_equal(back.phi_right, plane.phi_right)
    assert back.scale == plane.scale
    with pytest.raises(mpo.MpoError):
        mpo.Dataset(images, [0, 5, 1, 0], 2)


def test_single_class_mask_gives_no_diff():
    train, spec = small_setup()
    plane = mpo.init_plane(spec, seed=2)
    grid = mpo.eval_grid(plane, spec, train, 2, 2, max_examples=16)
    black, white, diff = mpo.black_white_means(grid, mpo.random_mask(2, 2, 1.0, 0))
    assert diff is None and math.isnan(white)
