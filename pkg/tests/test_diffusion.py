import numpy as np
import pytest

from st_enhance.core.errors import ShapeError, TimestepError
from st_enhance.core.models import DenoiserConfig, DiffusionConfig, ScheduleKind
from st_enhance.diffusion import (
    DiffusionSchedule,
    draw_noise,
    forward_noise,
    guided_eps,
    mse_step,
    noise_streams,
    sample,
)
from st_enhance.nets import Denoiser
from st_enhance.nets.encoders import ConditionBundle
from st_enhance.tensor import Adam, Tensor, double_precision, no_grad
from st_enhance.tensor.gradcheck import check_gradients


def bundle(n=3, genes=2, size=6, fill=1.0):
    planes = np.full((n, 3 + 2 * genes, size, size), fill, dtype=np.float32)
    return ConditionBundle(Tensor(planes), condition_planes=3, genes=genes, gene_planes=genes)


def zero_denoiser(x_t, t, condition):
    return Tensor(np.zeros(x_t.shape))


class OracleDenoiser:
    """Returns the exact noise that maps `target` to x_t."""

    def __init__(self, target, schedule):
        self.target = target
        self.schedule = schedule

    def __call__(self, x_t, t, condition):
        ab = self.schedule.alpha_bar[np.asarray(t)].reshape(-1, 1, 1, 1)
        return Tensor((x_t.data - np.sqrt(ab) * self.target) / np.sqrt(1.0 - ab))


class RecordingDenoiser:
    def __init__(self):
        self.conditions = []

    def __call__(self, x_t, t, condition):
        self.conditions.append(condition.data.copy())
        return Tensor(np.zeros(x_t.shape))


def small_denoiser(genes: int = 2, width: int = 4, seed: int = 0) -> Denoiser:
    config = DenoiserConfig(base_width=width, time_embedding_dim=width)
    return Denoiser(config, genes=genes, condition_channels=3 + 2 * genes, rng=np.random.default_rng(seed))


def conditional_stub(x_t, t, condition):
    value = 2.0 if condition.data.any() else 5.0
    return Tensor(np.full(x_t.shape, value))


@pytest.fixture
def schedule():
    return DiffusionSchedule.from_config(DiffusionConfig(timesteps=50))


@pytest.mark.parametrize("kind", [ScheduleKind.COSINE, ScheduleKind.LINEAR])
def test_schedule_is_variance_preserving(kind):
    s = DiffusionSchedule.from_config(DiffusionConfig(timesteps=1000, kind=kind))
    np.testing.assert_allclose(s.a**2 + s.sigma**2, 1.0, atol=1e-12)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.alpha_bar[0] > 0.99
    assert s.alpha_bar[-1] < 0.1


def test_forward_noise_endpoints(schedule, rng):
    x0 = rng.uniform(size=(2, 2, 4, 4))
    eps = rng.standard_normal((2, 2, 4, 4))
    early = forward_noise(x0, 0, eps, schedule).data
    np.testing.assert_allclose(early, schedule.a[0] * x0 + schedule.sigma[0] * eps, atol=1e-5)
    zero = forward_noise(np.zeros_like(x0), schedule.timesteps - 1, eps, schedule).data
    np.testing.assert_allclose(zero, schedule.sigma[-1] * eps, atol=1e-5)


def test_forward_noise_per_row_timesteps(schedule, rng):
    x0 = rng.uniform(size=(2, 1, 3, 3))
    eps = rng.standard_normal((2, 1, 3, 3))
    out = forward_noise(x0, np.array([0, 40]), eps, schedule).data
    np.testing.assert_allclose(out[1], schedule.a[40] * x0[1] + schedule.sigma[40] * eps[1], atol=1e-5)
    with pytest.raises(ShapeError):
        forward_noise(x0, np.array([0, 1, 2]), eps, schedule)


@pytest.mark.parametrize("kind", [ScheduleKind.COSINE, ScheduleKind.LINEAR])
def test_last_step_is_almost_pure_noise(kind, rng):
    s = DiffusionSchedule.from_config(DiffusionConfig(timesteps=1000, kind=kind))
    x0 = rng.uniform(size=(4, 2, 16, 16))
    eps = rng.standard_normal(x0.shape)
    x_t = forward_noise(x0, s.timesteps - 1, eps, s).data
    assert np.corrcoef(x_t.ravel(), eps.ravel())[0, 1] > 0.99


def test_timestep_range_is_checked(schedule):
    x0 = np.zeros((1, 1, 2, 2))
    with pytest.raises(TimestepError):
        forward_noise(x0, schedule.timesteps, x0, schedule)
    with pytest.raises(TimestepError):
        forward_noise(x0, -1, x0, schedule)


def test_respacing(schedule):
    np.testing.assert_array_equal(schedule.respaced(schedule.timesteps), np.arange(49, -1, -1))
    five = schedule.respaced(5)
    assert five[0] == 49 and five[-1] == 0
    assert np.all(np.diff(five) < 0)
    np.testing.assert_array_equal(schedule.respaced(1), [49])
    with pytest.raises(TimestepError):
        schedule.respaced(0)
    with pytest.raises(TimestepError):
        schedule.respaced(51)


def test_noise_streams_are_keyed_by_sample():
    a = noise_streams(["s1", "s2"], seed=0, step=3)
    b = noise_streams(["s2", "s1"], seed=0, step=3)
    assert a[0].random() == b[1].random()
    c = noise_streams(["s1"], seed=0, step=4)
    assert noise_streams(["s1"], seed=0, step=3)[0].random() != c[0].random()


def test_draw_noise_drop_probability():
    draw = draw_noise(noise_streams(["a", "b", "c"], 0, 0), (1, 2, 2), 10, drop_prob=1.0)
    assert draw.dropped.all()
    assert np.all((draw.t >= 0) & (draw.t < 10))
    assert not draw_noise(noise_streams(["a", "b"], 0, 0), (1, 2, 2), 10, drop_prob=0.0).dropped.any()


def test_mse_with_zero_denoiser_is_noise_power(schedule, rng):
    ids = [f"s{i}" for i in range(8)]
    x0 = rng.uniform(size=(8, 2, 10, 10))
    loss = mse_step(zero_denoiser, x0, bundle(8, size=10), schedule, noise_streams(ids, 0, 0), 0.0)
    assert loss.item() == pytest.approx(1.0, abs=0.15)


def test_mse_with_oracle_denoiser_is_zero(schedule, rng):
    ids = [f"s{i}" for i in range(4)]
    x0 = rng.uniform(size=(4, 2, 6, 6))
    oracle = OracleDenoiser(x0, schedule)
    loss = mse_step(oracle, x0, bundle(4), schedule, noise_streams(ids, 0, 0), 0.0)
    assert loss.item() < 1e-6


def test_mse_step_drops_conditions(schedule, rng):
    x0 = rng.uniform(size=(3, 2, 6, 6))
    recorder = RecordingDenoiser()
    mse_step(recorder, x0, bundle(3), schedule, noise_streams(["a", "b", "c"], 0, 0), 1.0)
    assert not recorder.conditions[0].any()
    mse_step(recorder, x0, bundle(3), schedule, noise_streams(["a", "b", "c"], 0, 0), 0.0)
    assert recorder.conditions[1].all()
    with pytest.raises(ShapeError):
        mse_step(recorder, x0, bundle(3), schedule, noise_streams(["a"], 0, 0), 0.0)


def test_mse_step_gradients_match_finite_differences(schedule, rng):
    denoiser = small_denoiser(genes=1)
    x0 = rng.uniform(size=(2, 1, 4, 4))
    cond = bundle(2, genes=1, size=4)

    def loss() -> Tensor:
        return mse_step(denoiser, x0, cond, schedule, noise_streams(["a", "b"], 0, 0), 0.0)

    assert check_gradients(loss, [denoiser.dec_out.weight, denoiser.dec_out.bias]) < 1e-3


def test_mse_step_ignores_batch_order(schedule, rng):
    denoiser = small_denoiser()
    ids = ["a", "b", "c", "d"]
    x0 = rng.uniform(size=(4, 2, 6, 6))
    planes = rng.normal(size=(4, 7, 6, 6))
    order = [2, 0, 3, 1]
    with double_precision():
        base = mse_step(denoiser, x0, ConditionBundle(Tensor(planes), 3, 2, 2), schedule,
                        noise_streams(ids, 0, 5), 0.3)
        moved = mse_step(denoiser, x0[order], ConditionBundle(Tensor(planes[order]), 3, 2, 2), schedule,
                         noise_streams([ids[i] for i in order], 0, 5), 0.3)
    assert moved.item() == pytest.approx(base.item(), abs=1e-6)


def test_denoiser_learns_a_constant_map(schedule):
    denoiser = small_denoiser(genes=1, width=8)
    x0 = np.full((4, 1, 4, 4), 0.5, dtype=np.float32)
    cond = bundle(4, genes=1, size=4)
    ids = ["a", "b", "c", "d"]

    def held_out() -> float:
        with no_grad():
            losses = [
                mse_step(denoiser, x0, cond, schedule, noise_streams(ids, 99, s), 0.0).item()
                for s in range(8)
            ]
        return float(np.mean(losses))

    before = held_out()
    opt = Adam(list(denoiser.named_parameters()), lr=1e-2)
    for step in range(200):
        opt.zero_grad()
        mse_step(denoiser, x0, cond, schedule, noise_streams(ids, 0, step), 0.0).backward()
        opt.step()
    after = held_out()
    assert np.isfinite(after)
    assert after < 0.75 * before


@pytest.mark.parametrize("omega, expected", [(0.0, 5.0), (1.0, 2.0), (2.0, -1.0), (0.5, 3.5)])
def test_guided_eps_mixes_conditional_and_null(omega, expected):
    b = bundle(2)
    x_t = Tensor(np.zeros((2, 2, 6, 6)))
    out = guided_eps(conditional_stub, x_t, np.zeros(2, dtype=np.int64), b, b.null(), omega)
    np.testing.assert_allclose(out.data, expected)


def test_guided_eps_rejects_mismatched_null(schedule):
    with pytest.raises(ShapeError):
        guided_eps(conditional_stub, Tensor(np.zeros((2, 2, 6, 6))), np.zeros(2), bundle(2), bundle(3).null(), 1.0)


def test_sampler_is_deterministic_and_bounded(schedule):
    b = bundle(2)
    first = sample(zero_denoiser, b, schedule, 1.5, 5, np.random.default_rng(7))
    second = sample(zero_denoiser, b, schedule, 1.5, 5, np.random.default_rng(7))
    other = sample(zero_denoiser, b, schedule, 1.5, 5, np.random.default_rng(8))
    assert first.shape == (2, 2, 6, 6)
    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, other)
    assert first.min() >= 0.0 and first.max() <= 1.0


@pytest.mark.parametrize("steps", [2, 4, 50])
def test_sampler_recovers_the_oracle_target(schedule, rng, steps):
    target = rng.uniform(size=(2, 2, 6, 6))
    out = sample(OracleDenoiser(target, schedule), bundle(2), schedule, 1.0, steps, rng)
    np.testing.assert_allclose(out, target, atol=1e-4)
