import numpy as np
import pytest

from anchorvid.latents import RandomStream, replicate_image
from anchorvid.metrics import dynamic_degree
from anchorvid.nivsds import NiVsdsConfig, ni_vsds, nivsds_steps, vanilla_sds, weight
from anchorvid.prior import OracleDenoiser, log_likelihood, sample_video, translating_bump_prior
from anchorvid.sampler import CountingDenoiser, NonFiniteError
from anchorvid.schedule import make_inference_grid, make_schedule


@pytest.fixture(scope="module")
def setup():
    s = make_schedule("scaled_linear", 0.00085, 0.012, 1000)
    prior = translating_bump_prior()
    grid = make_inference_grid(s, 25)
    return s, prior, grid, OracleDenoiser(prior, s)


def _static(prior, seed):
    ip = prior.image_marginal()
    k = seed % prior.K
    return replicate_image(sample_video(ip, ip.condition(k), RandomStream(seed).child(0)),
                           prior.F), prior.condition(k)


def test_config_validation(setup):
    s, prior, grid, dn = setup
    for bad in (dict(p=1.5), dict(p=-0.1), dict(alpha=-1.0), dict(weight_mode="cosine")):
        with pytest.raises(ValueError):
            NiVsdsConfig(grid, **bad)


def test_weight_modes(setup):
    s = setup[0]
    assert weight("constant_one", 10, s) == 1.0
    assert weight("one_minus_alpha_bar", 10, s) == pytest.approx(1 - s.alpha_bar(10))


def test_default_budget(setup):
    s, prior, grid, dn = setup
    counter = CountingDenoiser(dn)
    v, c = _static(prior, 0)
    _, trace = ni_vsds(v, counter, c, NiVsdsConfig(grid), s, RandomStream(0))
    assert counter.calls == 15 == len(trace) == len(nivsds_steps(NiVsdsConfig(grid), s))
    assert trace.timesteps[0] == 1000 and trace.timesteps[-1] >= 400
    assert all(a > b for a, b in zip(trace.timesteps, trace.timesteps[1:]))


def test_alpha_zero_is_identity(setup):
    s, prior, grid, dn = setup
    v, c = _static(prior, 1)
    out, trace = ni_vsds(v, dn, c, NiVsdsConfig(grid, alpha=0.0), s, RandomStream(1))
    assert out.tobytes() == v.tobytes()
    assert len(trace.grad_norms) == 15 and all(g > 0 for g in trace.grad_norms)


def test_noise_is_drawn_once(setup):
    s, prior, grid, dn = setup
    calls = []

    def spy(stream, F, d):
        calls.append(stream)
        return stream.normal((F, d))

    v, c = _static(prior, 2)
    out, trace = ni_vsds(v, dn, c, NiVsdsConfig(grid), s, RandomStream(2), noise_fn=spy)
    assert len(calls) == 1 and len(set(trace.noise_digests)) == 1
    again, _ = ni_vsds(v, dn, c, NiVsdsConfig(grid), s, RandomStream(2))
    assert again.tobytes() == out.tobytes()


def test_trace_csv(setup):
    s, prior, grid, dn = setup
    v, c = _static(prior, 3)
    _, trace = ni_vsds(v, dn, c, NiVsdsConfig(grid), s, RandomStream(3))
    lines = trace.to_csv().strip().split("\n")
    assert lines[0].startswith("iteration,timestep") and len(lines) == 16


def test_animation_effect(setup):
    s, prior, grid, dn = setup
    moved = 0
    for seed in range(100):
        v, c = _static(prior, seed)
        assert dynamic_degree(v) == 0.0
        out, _ = ni_vsds(v, dn, c, NiVsdsConfig(grid), s, RandomStream(seed).child(1))
        moved += dynamic_degree(out) > 0
    assert moved >= 95


def test_beats_vanilla_sds_on_matched_budget(setup):
    s, prior, grid, dn = setup
    wins = 0
    for seed in range(100):
        v, c = _static(prior, seed)
        ni, _ = ni_vsds(v, dn, c, NiVsdsConfig(grid), s, RandomStream(seed).child(1))
        va = vanilla_sds(v, dn, c, 15, 1.0, s, RandomStream(seed).child(2))
        wins += log_likelihood(prior, ni) >= log_likelihood(prior, va)
    assert wins >= 70


def test_vanilla_sds_basics(setup):
    s, prior, grid, dn = setup
    v, c = _static(prior, 4)
    assert vanilla_sds(v, dn, c, 0, 1.0, s, RandomStream(0)).tobytes() == v.tobytes()
    a = vanilla_sds(v, dn, c, 5, 1.0, s, RandomStream(4))
    assert a.tobytes() == vanilla_sds(v, dn, c, 5, 1.0, s, RandomStream(4)).tobytes()
    with pytest.raises(ValueError):
        vanilla_sds(v, dn, c, -1, 1.0, s, RandomStream(0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_carries_trace(setup):
    s, prior, grid, _ = setup

    class Bad:
        def predict_noise(self, z_t, c, t):
            return np.full_like(z_t, np.nan if t < 900 else 0.0)

    v, c = _static(prior, 5)
    with pytest.raises(NonFiniteError) as info:
        ni_vsds(v, Bad(), c, NiVsdsConfig(grid), s, RandomStream(0))
    trace = info.value.diagnostics["trace"]
    assert len(trace) == len(trace.timesteps) and trace.timesteps[-1] < 900
