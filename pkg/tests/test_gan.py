import numpy as np
import pytest
from numpy.testing import assert_array_equal

from weakfuse.classifier import make_classifier_head, make_trunk
from weakfuse.errors import DomainError
from weakfuse.gan import (
    GanParts,
    LatentSampler,
    discriminate,
    gan_grads,
    gan_losses,
    gan_train_step,
    make_discriminator_head,
    make_gan_optimizers,
    make_generator,
    sample,
)
from weakfuse.nn import Adam

from conftest import central_diff, rel_error


def small_parts(seed, n_features=2, C=3, latent=3):
    rng = np.random.default_rng(seed)
    trunk = make_trunk(n_features, (8, 6), rng=rng)
    return GanParts(
        generator=make_generator(latent, C, n_features, (8, 8), rng=rng),
        trunk=trunk,
        d_head=make_discriminator_head(6, rng=rng),
        cls_head=make_classifier_head(6, C, rng=rng),
        n_classes=C,
    )


def batch(seed, parts, n=6, latent=3):
    rng = np.random.default_rng(seed + 1000)
    real = rng.normal(size=(n, parts.trunk.n_in))
    z = rng.normal(size=(n, latent))
    c = rng.integers(0, parts.n_classes, n)
    return real, z, c


def test_uninformative_discriminator_loss():
    parts = small_parts(0)
    parts.d_head.W[...] = 0.0
    parts.d_head.b[...] = 0.0
    d_loss, g_adv, _ = gan_losses(parts, *batch(0, parts))
    assert d_loss == pytest.approx(2 * np.log(2), abs=1e-12)
    assert g_adv == pytest.approx(np.log(2), abs=1e-12)


def test_perfect_guidance_is_zero():
    parts = small_parts(1)
    parts.cls_head.W[...] = 0.0
    parts.cls_head.b[...] = [1000.0, 0.0, 0.0]
    real, z, _ = batch(1, parts)
    _, _, guid = gan_losses(parts, real, z, np.zeros(len(z), dtype=int))
    assert guid == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_gan_gradients_match_finite_differences(seed):
    parts = small_parts(seed)
    real, z, c = batch(seed, parts)
    _, (d_grads, adv_grads, guid_grads) = gan_grads(parts, real, z, c)
    d_params = parts.trunk.params() + parts.d_head.params()
    g_params = parts.generator.params()
    for k, (params, grads) in enumerate([(d_params, d_grads), (g_params, adv_grads), (g_params, guid_grads)]):
        num = central_diff(lambda: gan_losses(parts, real, z, c)[k], params)
        assert rel_error(grads, num) <= 1e-4, k


def test_class_head_outside_discriminator():
    parts = small_parts(2)
    real, z, c = batch(2, parts)
    _, (d_grads, _, _) = gan_grads(parts, real, z, c)
    for p in parts.cls_head.params():
        p += 0.5  # the class head is not part of the discriminator
    _, (d_grads2, _, _) = gan_grads(parts, real, z, c)
    for a, b in zip(d_grads, d_grads2):
        assert_array_equal(a, b)


def test_non_saturating_gradient_nonzero():
    parts = small_parts(3)
    parts.d_head.b[...] = 8.0  # D(G) close to, but below, 1
    real, z, c = batch(3, parts)
    _, (_, adv, _) = gan_grads(parts, real, z, c)
    assert sum(float(np.abs(g).sum()) for g in adv) > 0.0


def test_losses_are_finite_and_nonnegative():
    parts = small_parts(4)
    parts.d_head.b[...] = 1e4
    losses = gan_losses(parts, *batch(4, parts))
    assert all(np.isfinite(losses)) and min(losses) >= 0.0


def _snapshot(params):
    return [p.copy() for p in params]


def test_guidance_isolation():
    parts = small_parts(5)
    ref = small_parts(5)
    cls_before = _snapshot(parts.cls_head.params())
    opts = make_gan_optimizers(parts, lr_guidance=0.0)
    ref_g = Adam(ref.generator.params(), lr=1e-4)
    ref_d = Adam(ref.trunk.params() + ref.d_head.params(), lr=4e-4)
    s1 = LatentSampler(3, 3, np.random.default_rng(9))
    s2 = LatentSampler(3, 3, np.random.default_rng(9))
    data = np.random.default_rng(10)
    for _ in range(5):
        real = data.normal(size=(6, 2))
        gan_train_step(parts, opts, real, s1)
        # reference: adversarial generator step and discriminator step only
        z, c = s2(6)
        _, (_, adv, _) = gan_grads(ref, real, z, c)
        ref_g.step(adv)
        _, (d, _, _) = gan_grads(ref, real, z, c)
        ref_d.step(d)
    for a, b in zip(parts.cls_head.params(), cls_before):
        assert_array_equal(a, b)
    for a, b in zip(parts.generator.params() + parts.trunk.params(),
                    ref.generator.params() + ref.trunk.params()):
        assert_array_equal(a, b)


def test_discriminator_learns_real_batch():
    parts = small_parts(6)
    opts = make_gan_optimizers(parts)
    sampler = LatentSampler(3, 3, np.random.default_rng(0))
    real = np.random.default_rng(1).normal(loc=2.0, size=(32, 2))
    z, c = sampler(32)
    means = []
    for _ in range(6):
        means.append(float(np.mean(np.log(discriminate(parts.trunk, parts.d_head, real)))))
        _, (d, _, _) = gan_grads(parts, real, z, c)
        opts.d.step(d)
    assert all(b > a for a, b in zip(means, means[1:]))


def test_replay_is_deterministic():
    traces = []
    for _ in range(2):
        parts = small_parts(7)
        opts = make_gan_optimizers(parts)
        sampler = LatentSampler(3, 3, np.random.default_rng(3))
        data = np.random.default_rng(4)
        traces.append([gan_train_step(parts, opts, data.normal(size=(8, 2)), sampler) for _ in range(10)])
    assert traces[0] == traces[1]


def test_sample_contract():
    parts = small_parts(8)
    assert sample(parts.generator, 3, 1, 0, 0).shape == (0, 2)
    a = sample(parts.generator, 3, 2, 5, np.random.default_rng(11))
    b = sample(parts.generator, 3, 2, 5, np.random.default_rng(11))
    assert_array_equal(a, b)
    assert a.shape == (5, 2)
    with pytest.raises(DomainError):
        sample(parts.generator, 3, 3, 5, 0)
    with pytest.raises(DomainError):
        sample(parts.generator, 3, -1, 5, 0)


def test_latent_sampler_reproducible():
    a = LatentSampler(4, 3, 5)(10)
    b = LatentSampler(4, 3, 5)(10)
    assert_array_equal(a[0], b[0])
    assert_array_equal(a[1], b[1])
    assert a[1].min() >= 0 and a[1].max() < 3


@pytest.mark.slow
def test_two_point_distribution_support():
    # a 1-D target on {-1, +1}; rates raised above the defaults so 2000 steps suffice
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        trunk = make_trunk(1, (16, 16), rng=rng)
        parts = GanParts(make_generator(4, 1, 1, (16, 16), rng=rng), trunk,
                         make_discriminator_head(16, rng=rng), make_classifier_head(16, 1, rng=rng), 1)
        opts = make_gan_optimizers(parts, lr_g=1e-3, lr_d=1e-3)
        sampler = LatentSampler(4, 1, np.random.default_rng(seed + 100))
        data = np.random.default_rng(seed + 200)
        for _ in range(2000):
            gan_train_step(parts, opts, data.choice([-1.0, 1.0], size=(64, 1)), sampler)
        x = sample(parts.generator, 1, 0, 1000, np.random.default_rng(1))[:, 0]
        dist = np.minimum(np.abs(x - 1.0), np.abs(x + 1.0))
        hits += (dist < 0.1).mean() >= 0.9
    assert hits >= 3
