import math

import numpy as np
import pytest

from anchorvid.latents import RandomStream, ShapeError
from anchorvid.learned import (DivergenceError, TinyDenoiser, checkpoint_bytes,
                               checkpoint_from_bytes, draw_batch, gradient_check, load_checkpoint,
                               loss_and_grads, predict_noise, save_checkpoint, time_features,
                               train)
from anchorvid.prior import translating_bump_prior
from anchorvid.schedule import make_schedule


@pytest.fixture(scope="module")
def sd():
    return make_schedule("scaled_linear", 0.00085, 0.012, 1000)


@pytest.fixture(scope="module")
def small_prior():
    return translating_bump_prior(K=2, F=3, d=4)


def _model(prior, hidden=8, seed=0, zero=False):
    return TinyDenoiser.init(prior.F, prior.d, prior.embedding_dim, 1000, hidden,
                             RandomStream(seed), zero=zero)


def test_time_features():
    f = time_features([0, 500, 1000], 1000)
    assert f.shape == (3, 9)
    np.testing.assert_allclose(f[:, 0], [0, 0.5, 1])
    np.testing.assert_allclose(f[1, 1:5], np.sin(np.pi * 2.0 ** np.arange(4) * 0.5), atol=1e-15)


def test_zero_predictor_loss_is_chi_square_mean(small_prior, sd):
    m = _model(small_prior, zero=True)
    n = 20_000
    b = draw_batch(small_prior, sd, n, RandomStream(1))
    loss, _ = loss_and_grads(m, b.z_t, b.emb, b.t, b.eps, need_grads=False)
    D = small_prior.F * small_prior.d
    assert abs(loss - D) <= 4 * math.sqrt(2 * D / n)


def test_perfect_predictor_has_zero_loss(small_prior, sd):
    b = draw_batch(small_prior, sd, 16, RandomStream(2))
    R = b.eps.reshape(16, -1) - b.eps.reshape(16, -1)
    assert float(np.sum(R * R)) == 0.0


def test_predict_noise_contracts(small_prior):
    m = _model(small_prior)
    z = np.random.default_rng(0).normal(size=(3, 4))
    c = small_prior.condition(1)
    a, b = predict_noise(m, z, c, 10), predict_noise(m, z, c, 10)
    assert a.tobytes() == b.tobytes() and a.shape == (3, 4) and np.all(np.isfinite(a))
    assert np.all(predict_noise(_model(small_prior, zero=True), z, c, 10) == 0)
    with pytest.raises(ShapeError):
        predict_noise(m, np.zeros((2, 4)), c, 10)


def test_gradient_check_passes(small_prior, sd):
    m = _model(small_prior, hidden=6)
    b = draw_batch(small_prior, sd, 5, RandomStream(3))
    assert gradient_check(m, b, max_coords=None) < 1e-4


def test_gradient_check_has_teeth(small_prior, sd):
    m = _model(small_prior, hidden=6)
    b = draw_batch(small_prior, sd, 5, RandomStream(3))

    def flip(grads):
        grads["W1"] *= -1

    assert gradient_check(m, b, max_coords=None, corrupt=flip) > 1e-1


def test_gradient_check_at_zero_parameters(small_prior, sd):
    m = _model(small_prior, hidden=6, zero=True)
    b = draw_batch(small_prior, sd, 5, RandomStream(4))
    _, g = loss_and_grads(m, b.z_t, b.emb, b.t, b.eps)
    # with W2 = 0 no signal reaches the first layer
    assert np.all(g["W1"] == 0) and np.all(g["b1"] == 0)
    assert gradient_check(m, b, max_coords=None) < 1e-4


def test_training_reduces_loss_and_is_reproducible(small_prior, sd):
    kw = dict(epochs=3, batch=32, lr=1e-2, hidden=16, steps_per_epoch=50, eval_size=128)
    m1, r1 = train(small_prior, sd, stream=RandomStream(5), **kw)
    m2, r2 = train(small_prior, sd, stream=RandomStream(5), **kw)
    assert r1.final_loss < r1.initial_loss
    assert all(l >= 0 for l in r1.epoch_losses)
    assert checkpoint_bytes(m1) == checkpoint_bytes(m2)
    assert r1.epoch_losses == r2.epoch_losses and r1.oracle_gaps == r2.oracle_gaps
    assert len(r1.oracle_gaps) == 3


def test_training_collects_checkpoints(small_prior, sd):
    ckpts = []
    m, _ = train(small_prior, sd, 2, 8, 1e-3, RandomStream(6), hidden=4, steps_per_epoch=5,
                 eval_size=16, checkpoints=ckpts)
    assert len(ckpts) == 2 and checkpoint_bytes(ckpts[-1]) == checkpoint_bytes(m)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(small_prior, sd):
    with pytest.raises(DivergenceError):
        train(small_prior, sd, 3, 32, 1e6, RandomStream(7), hidden=8, steps_per_epoch=50,
              eval_size=16)


def test_training_rejects_bad_arguments(small_prior, sd):
    with pytest.raises(ValueError):
        train(small_prior, sd, 0, 8, 1e-3, RandomStream(0))
    with pytest.raises(ValueError):
        train(small_prior, sd, 1, 8, 0.0, RandomStream(0))


def test_checkpoint_round_trip(small_prior, tmp_path):
    m = _model(small_prior, hidden=5)
    data = checkpoint_bytes(m)
    assert data[:8] == b"NVSDMLP1"
    m2 = load_checkpoint(save_checkpoint(tmp_path / "m.bin", m))
    assert checkpoint_bytes(m2) == data
    z = np.ones((3, 4))
    np.testing.assert_array_equal(m.predict_noise(z, None, 3), m2.predict_noise(z, None, 3))


def test_checkpoint_rejects_corruption(small_prior):
    data = checkpoint_bytes(_model(small_prior, hidden=5))
    with pytest.raises(ValueError):
        checkpoint_from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ValueError):
        checkpoint_from_bytes(data[:-8])
