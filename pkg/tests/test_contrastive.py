import math

import numpy as np
import pytest

from st_enhance.contrastive import (
    PairLoss,
    PairScheme,
    alignment_uniformity,
    enumerate_pairs,
    info_nce,
    loss_content,
    loss_inter_sphere,
    loss_modal,
    reference_loss,
)
from st_enhance.core.errors import BatchTooSmallError, EmptyPairSetError
from st_enhance.nets import norm_project
from st_enhance.tensor import Adam, Tensor, double_precision
from st_enhance.tensor.gradcheck import check_gradients


def unit_rows(rng: np.random.Generator, n: int, d: int = 6) -> Tensor:
    return norm_project(Tensor(rng.normal(size=(n, d))))


def identical(n: int, d: int = 4) -> Tensor:
    row = np.zeros(d, dtype=np.float32)
    row[0] = 1.0
    return Tensor(np.tile(row, (n, 1)))


def test_info_nce_identical_embeddings():
    z = Tensor([1.0, 0.0])
    loss = info_nce(z, Tensor([[1.0, 0.0]]), Tensor([[1.0, 0.0]] * 3), tau=0.3)
    assert loss.item() == pytest.approx(math.log(4), abs=1e-6)


def test_info_nce_saturates_with_orthogonal_negatives():
    z = Tensor([1.0, 0.0])
    loss = info_nce(z, Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0], [0.0, -1.0]]), tau=0.01)
    assert loss.item() < 1e-4


def test_info_nce_scalar_oracle():
    z = Tensor([1.0, 0.0])
    loss = info_nce(z, Tensor([[0.8, 0.6]]), Tensor([[0.0, 1.0], [-1.0, 0.0]]), tau=1.0)
    expected = -math.log(math.exp(0.8) / (math.exp(0.8) + math.exp(0.0) + math.exp(-1.0)))
    assert loss.item() == pytest.approx(expected, abs=1e-6)


def test_info_nce_needs_positives_and_negatives():
    z = Tensor([1.0, 0.0])
    with pytest.raises(EmptyPairSetError):
        info_nce(z, Tensor(np.zeros((0, 2))), Tensor([[0.0, 1.0]]), tau=1.0)
    with pytest.raises(EmptyPairSetError):
        info_nce(z, Tensor([[0.0, 1.0]]), Tensor(np.zeros((0, 2))), tau=1.0)


def test_loss_modal_identical_batch():
    x = identical(3)
    assert loss_modal(x, x, 0.2).item() == pytest.approx(2 * math.log(4), abs=1e-5)


def test_loss_content_identical_batch():
    x = identical(3)
    assert loss_content(x, x, 0.2).item() == pytest.approx(2 * math.log(5), abs=1e-5)


def test_loss_inter_sphere_identical_batch():
    x = identical(3)
    assert loss_inter_sphere(x, x, 0.2).item() == pytest.approx(math.log(3), abs=1e-5)


def test_loss_modal_separated_modalities():
    e1 = identical(3, d=4)
    e2 = Tensor(np.tile(np.array([0.0, 1.0, 0.0, 0.0], dtype=np.float32), (3, 1)))
    assert loss_modal(e1, e2, 0.05).item() < 1e-3


def test_loss_content_aligned_orthogonal_pairs():
    eye = Tensor(np.eye(4, dtype=np.float32)[:3])
    assert loss_content(eye, eye, 0.05).item() < 1e-3


def test_loss_inter_sphere_aligned_orthogonal_rows():
    eye = Tensor(np.eye(4, dtype=np.float32)[:3])
    assert loss_inter_sphere(eye, eye, 0.05).item() < 1e-3


@pytest.mark.parametrize("n", [2, 3, 4, 8])
@pytest.mark.parametrize("d", [4, 64])
@pytest.mark.parametrize("seed", range(6))
def test_vectorised_losses_match_pair_enumeration(n, d, seed):
    rng = np.random.default_rng([seed, n, d])
    M_h, M_y, C_h, C_y = (unit_rows(rng, n, d) for _ in range(4))
    features = {"M_h": M_h, "M_y": M_y, "C_h": C_h, "C_y": C_y}
    tau = 0.5
    cases = [
        (loss_modal(M_h, M_y, tau), PairLoss.MODAL),
        (loss_content(C_h, C_y, tau), PairLoss.CONTENT),
        (loss_inter_sphere(M_h, C_h, tau), PairLoss.INTER_SPHERE),
    ]
    for value, kind in cases:
        assert value.item() == pytest.approx(reference_loss(kind, features, tau).item(), abs=1e-5)


def all_losses(M_h: Tensor, M_y: Tensor, C_h: Tensor, C_y: Tensor, tau: float = 0.5):
    return [
        loss_modal(M_h, M_y, tau).item(),
        loss_content(C_h, C_y, tau).item(),
        loss_inter_sphere(M_h, C_h, tau).item(),
    ]


@pytest.mark.parametrize("seed", range(4))
def test_losses_ignore_batch_order(seed):
    rng = np.random.default_rng(seed)
    with double_precision():
        heads = [unit_rows(rng, 6, 8) for _ in range(4)]
        order = rng.permutation(6)
        shuffled = [Tensor(t.data[order]) for t in heads]
        np.testing.assert_allclose(all_losses(*shuffled), all_losses(*heads), rtol=0, atol=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_losses_ignore_a_shared_rotation(seed):
    rng = np.random.default_rng(seed)
    with double_precision():
        heads = [unit_rows(rng, 5, 8) for _ in range(4)]
        rotation, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        rotated = [Tensor(t.data @ rotation) for t in heads]
        np.testing.assert_allclose(all_losses(*rotated), all_losses(*heads), rtol=0, atol=1e-5)


def optimise_heads(loss_fn, steps: int = 100, seed: int = 0):
    """Fit two free 4×6 heads to one loss with Adam; returns the start and end projections."""
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    start = norm_project(a).data.copy(), norm_project(b).data.copy()
    opt = Adam([("a", a), ("b", b)], lr=0.05)
    for _ in range(steps):
        opt.zero_grad()
        loss_fn(norm_project(a), norm_project(b)).backward()
        opt.step()
    return start, (norm_project(a).data, norm_project(b).data)


def test_content_loss_pulls_matched_pairs_together():
    (h0, y0), (h1, y1) = optimise_heads(lambda h, y: loss_content(h, y, 0.2))
    before = float(np.mean(np.sum(h0 * y0, axis=1)))
    after = float(np.mean(np.sum(h1 * y1, axis=1)))
    assert after > before
    assert after > 0.8


def test_modal_loss_separates_the_modalities():
    def gap(h: np.ndarray, y: np.ndarray) -> float:
        off = ~np.eye(len(h), dtype=bool)
        within = np.concatenate([(h @ h.T)[off], (y @ y.T)[off]]).mean()
        return float(within - (h @ y.T).mean())

    start, end = optimise_heads(lambda h, y: loss_modal(h, y, 0.2))
    assert gap(*end) > gap(*start)
    assert gap(*end) > 0.5


def test_pair_counts():
    n = 5
    modal = enumerate_pairs(PairLoss.MODAL, n)
    assert len(modal) == 2
    assert all(len(s.positives) == n - 1 and len(s.negatives) == n for s in modal[0])
    content = enumerate_pairs(PairLoss.CONTENT, n)
    assert all(len(s.positives) == 1 and len(s.negatives) == 2 * (n - 1) for s in content[1])
    inter = enumerate_pairs(PairLoss.INTER_SPHERE, n)
    assert len(inter) == 1
    assert all(len(s.positives) == 1 and len(s.negatives) == n - 1 for s in inter[0])


def test_pair_scheme_rejects_overlap():
    with pytest.raises(ValueError):
        PairScheme(("M_h", 0), (("M_h", 1),), (("M_h", 1),))


def test_pair_losses_need_two_samples():
    one = identical(1)
    for fn in (loss_modal, loss_content, loss_inter_sphere):
        with pytest.raises(BatchTooSmallError):
            fn(one, one, 0.1)


def test_learnable_temperature_receives_gradient(rng):
    log_tau = Tensor(math.log(0.1), requires_grad=True)
    C_h, C_y = unit_rows(rng, 4), unit_rows(rng, 4)
    loss_content(C_h, C_y, log_tau.exp()).backward()
    assert log_tau.grad != 0


def test_loss_gradients_match_finite_differences(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def loss() -> Tensor:
        A, B = norm_project(a), norm_project(b)
        return loss_modal(A, B, 0.5) + loss_content(A, B, 0.5) + loss_inter_sphere(A, B, 0.5)

    assert check_gradients(loss, [a, b], step=1e-3) < 1e-3


def test_alignment_is_zero_for_identical_views(rng):
    z = unit_rows(rng, 5)
    align, uniform = alignment_uniformity(z, z)
    assert align == pytest.approx(0.0)
    assert uniform < 0


def test_uniformity_of_antipodal_pair():
    z = np.array([[1.0, 0.0], [-1.0, 0.0]])
    _, uniform = alignment_uniformity(z, z)
    assert uniform == pytest.approx(math.log((math.exp(-8) + math.exp(-8)) / 2))


def test_alignment_decreases_under_interpolation(rng):
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(6, 4))
    values = [alignment_uniformity(a, (1 - w) * b + w * a)[0] for w in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_uniformity_is_undefined_for_one_row():
    _, uniform = alignment_uniformity(np.ones((1, 3)), np.ones((1, 3)))
    assert math.isnan(uniform)
