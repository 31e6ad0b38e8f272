import numpy as np

from resonantwave.spectral import SpectralField


def random_field(rng, L, J, decay=0.6, scale=1.0):
    """Real field (reality condition enforced) with geometric decay in |l| and j."""
    l = np.arange(-L, L + 1)[:, None]
    j = np.arange(1, J + 1)[None, :]
    c = (rng.standard_normal((2 * L + 1, J)) + 1j * rng.standard_normal((2 * L + 1, J)))
    c *= scale * decay ** (np.abs(l) + j)
    c = 0.5 * (c + np.conj(c[::-1]))
    return SpectralField(c)


def random_V(rng, L, modes=None, scale=0.3, decay=0.6):
    modes = modes or L
    z = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes)) * scale * decay ** np.arange(modes)
    return SpectralField.from_modes(L, L, {(l, l): z[l - 1] for l in range(1, modes + 1)})
