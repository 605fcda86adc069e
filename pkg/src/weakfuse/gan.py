"""Classifier-guided conditional GAN over low-dimensional feature vectors.

The discriminator is the shared trunk followed by a one-unit head; its
probability is ``sigmoid(logit)`` and all adversarial losses are evaluated in
logit space (softplus) for stability. The generator gets two signals: the
non-saturating adversarial loss and the classifier's cross-entropy against
the conditioning class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .nn import LOG_FLOOR, Adam, Dense, Network, backward, safe_log, sigmoid, softplus

DEFAULT_GEN_HIDDEN = (32, 32)


def make_generator(latent_dim, n_classes, n_features, hidden=DEFAULT_GEN_HIDDEN, rng=None):
    return Network.mlp([latent_dim + n_classes, *hidden, n_features], out="identity", rng=rng)


def make_discriminator_head(trunk_dim, rng=None):
    return Dense(trunk_dim, 1, "identity", rng=rng)


class LatentSampler:
    """z ~ N(0, I), c ~ Uniform{0..C-1} from a seeded generator."""

    def __init__(self, latent_dim, n_classes, rng):
        self.latent_dim = latent_dim
        self.n_classes = n_classes
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def __call__(self, n, classes=None):
        z = self.rng.standard_normal((n, self.latent_dim))
        c = self.rng.integers(0, self.n_classes, size=n) if classes is None else np.asarray(classes)
        return z, c


def generator_input(z, c, n_classes):
    return np.hstack([z, np.eye(n_classes)[np.asarray(c, dtype=np.int64)]])


def discriminate(trunk, d_head, x):
    h, _ = trunk.run(x)
    logit, _ = d_head.forward(h)
    return sigmoid(logit[:, 0])


@dataclass
class GanParts:
    generator: Network
    trunk: Network
    d_head: Dense
    cls_head: Dense
    n_classes: int


def gan_grads(parts, real, z, c):
    """Losses and gradients for one batch.

    Returns ``(losses, grads)`` with ``losses = (d_loss, g_adv, g_guidance)`` and
    ``grads = (d_grads, g_adv_grads, g_guidance_grads)``; ``d_grads`` align with
    ``trunk.params() + d_head.params()``, the others with ``generator.params()``.
    Generated samples are constants for the discriminator loss; the classifier
    (trunk + class head) is a constant for the guidance loss.
    """
    G, trunk, d_head, cls_head = parts.generator, parts.trunk, parts.d_head, parts.cls_head
    real = np.atleast_2d(real)
    nr, nf = real.shape[0], z.shape[0]
    c = np.asarray(c, dtype=np.int64)

    fake, g_tape = G.run(generator_input(z, c, parts.n_classes))

    # discriminator
    h_real, t_real = trunk.run(real)
    l_real, k_real = d_head.forward(h_real)
    h_fake, t_fake = trunk.run(fake)
    l_fake, k_fake = d_head.forward(h_fake)
    d_loss = float(softplus(-l_real).mean() + softplus(l_fake).mean())
    gh_r, dh_r = d_head.backward(k_real, -sigmoid(-l_real) / nr)
    gh_f, dh_f = d_head.backward(k_fake, sigmoid(l_fake) / nf)
    tr_r, _ = backward(trunk, gh_r, t_real)
    tr_f, _ = backward(trunk, gh_f, t_fake)
    d_grads = [a + b for a, b in zip(tr_r + dh_r, tr_f + dh_f)]

    # generator, adversarial: −log D(G(z, c))
    g_adv = float(softplus(-l_fake).mean())
    gh, _ = d_head.backward(k_fake, -sigmoid(-l_fake) / nf)
    _, gx = backward(trunk, gh, t_fake)
    g_adv_grads, _ = backward(G, gx, g_tape)

    # generator, guidance: CE(classifier(G(z, c)), c)
    p, k_cls = cls_head.forward(h_fake)
    onehot = np.eye(parts.n_classes)[c]
    g_guid = float(-(onehot * safe_log(p)).sum(axis=1).mean())
    gp = np.where(p > LOG_FLOOR, -onehot / np.maximum(p, LOG_FLOOR), 0.0) / nf
    gh, _ = cls_head.backward(k_cls, gp)
    _, gx = backward(trunk, gh, t_fake)
    g_guid_grads, _ = backward(G, gx, g_tape)

    losses = (d_loss, g_adv, g_guid)
    if not all(np.isfinite(losses)):
        raise NumericError(f"non-finite GAN loss {losses}")
    return losses, (d_grads, g_adv_grads, g_guid_grads)


def gan_losses(parts, real, z, c):
    return gan_grads(parts, real, z, c)[0]


@dataclass
class GanOptimizers:
    g_adv: Adam
    d: Adam
    g_guidance: Adam


def make_gan_optimizers(parts, lr_g=1e-4, lr_d=4e-4, lr_guidance=1e-5):
    return GanOptimizers(
        g_adv=Adam(parts.generator.params(), lr=lr_g),
        d=Adam(parts.trunk.params() + parts.d_head.params(), lr=lr_d),
        g_guidance=Adam(parts.generator.params(), lr=lr_guidance),
    )


def gan_train_step(parts, opts, real, sampler):
    """Generator update (adversarial, then guidance) followed by a discriminator update.

    Both generator gradients come from the same latent batch; the
    discriminator then sees that batch re-generated by the updated generator.
    Returns ``(d_loss, g_adv, g_guidance)`` measured before the updates.
    """
    real = np.atleast_2d(real)
    z, c = sampler(real.shape[0])
    losses, (_, g_adv_grads, g_guid_grads) = gan_grads(parts, real, z, c)
    opts.g_adv.step(g_adv_grads)
    opts.g_guidance.step(g_guid_grads)
    _, (d_grads, _, _) = gan_grads(parts, real, z, c)
    opts.d.step(d_grads)
    return losses


def sample(generator, n_classes, cls, n, rng):
    """``n`` samples conditioned on class ``cls``."""
    if not 0 <= int(cls) < n_classes:
        raise DomainError(f"class {cls} outside 0..{n_classes - 1}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    latent_dim = generator.n_in - n_classes
    if n == 0:
        return np.zeros((0, generator.n_out))
    z = rng.standard_normal((n, latent_dim))
    out, _ = generator.run(generator_input(z, np.full(n, int(cls)), n_classes))
    return out
