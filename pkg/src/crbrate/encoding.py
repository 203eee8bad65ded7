"""Real parameter vectors for (w, S) so the ellipsoid engine can search over them.

Layout: ``[Re w, Im w, diag(S), Re S_ij (i<j), Im S_ij (i<j)]``.  The beam
block is absent when ``with_beam`` is false.  A linear functional
``tr(G S)`` with Hermitian ``G`` has gradient :func:`hermitian_gradient`
in this layout.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _upper(n):
    return np.triu_indices(n, k=1)


def hermitian_to_real(s):
    s = np.asarray(s, dtype=complex)
    iu = _upper(s.shape[0])
    return np.concatenate([np.real(np.diag(s)), s[iu].real, s[iu].imag])


def real_to_hermitian(x, n):
    iu = _upper(n)
    m = len(iu[0])
    s = np.diag(np.asarray(x[:n], dtype=complex))
    off = x[n : n + m] + 1j * x[n + m : n + 2 * m]
    s[iu] = off
    s[(iu[1], iu[0])] = off.conj()
    return s


def hermitian_gradient(g):
    """Gradient of ``S -> tr(G S)`` in the real layout (off-diagonals doubled).

    ``g`` may be a single Hermitian matrix or a stack ``(m, n, n)``.
    """
    g = np.asarray(g, dtype=complex)
    n = g.shape[-1]
    iu = _upper(n)
    diag = np.real(np.diagonal(g, axis1=-2, axis2=-1))
    off = g[..., iu[0], iu[1]]
    return np.concatenate([diag, 2.0 * off.real, 2.0 * off.imag], axis=-1)


@dataclass(frozen=True)
class FeasibilityVars:
    """Encoder/decoder between ``(w, S)`` and a flat real vector."""

    n_tx: int
    with_beam: bool = True

    @property
    def beam_dim(self):
        return 2 * self.n_tx if self.with_beam else 0

    @property
    def dim(self):
        return self.beam_dim + self.n_tx**2

    def encode(self, w, s):
        parts = []
        if self.with_beam:
            w = np.asarray(w, dtype=complex)
            parts += [w.real, w.imag]
        parts.append(hermitian_to_real(s))
        return np.concatenate(parts)

    def decode(self, x):
        n = self.n_tx
        b = self.beam_dim
        w = x[:n] + 1j * x[n : 2 * n] if self.with_beam else None
        return w, real_to_hermitian(x[b:], n)

    def beam_gradient(self, c):
        """Gradient of ``w -> Re(w^H c)`` (a complex vector ``c``, or stack)."""
        c = np.asarray(c, dtype=complex)
        return np.concatenate([c.real, c.imag], axis=-1)
