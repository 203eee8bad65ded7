"""System model: configuration, channels and the rate / SINR / CRB formulas."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .linalg import check_hermitian, trace_inverse


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, radar interval length, noise powers and power budget.

    Powers are linear.  ``noise_comm`` is the CU receiver noise and
    ``noise_radar`` the per-entry echo noise at the BS.
    """

    n_tx: int = 4
    n_rx: int = 4
    symbols: int = 256
    noise_comm: float = 1.0
    noise_radar: float = 1.0
    power: float = 1.0

    def __post_init__(self):
        if self.n_tx < 2:
            raise ContractError("n_tx must be > 1")
        if self.n_rx < self.n_tx:
            raise ContractError("n_rx must be >= n_tx")
        if self.symbols < 1:
            raise ContractError("symbols must be >= 1")
        for name in ("noise_comm", "noise_radar", "power"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")

    @property
    def crb_scale(self):
        """Factor ``N_r sigma_r^2 / L`` mapping ``tr(S^{-1})`` to the CRB."""
        return self.n_rx * self.noise_radar / self.symbols

    def gamma_from_crb(self, crb):
        """Trace-inverse budget ``Gamma = CRB * L / (N_r sigma_r^2)``."""
        return crb / self.crb_scale

    @property
    def crb_min(self):
        return self.crb_scale * self.n_tx**2 / self.power


@dataclass(frozen=True)
class ChannelSet:
    """The K downlink channel vectors, stored as rows of a ``(K, N_t)`` array."""

    channels: np.ndarray

    def __post_init__(self):
        h = np.array(self.channels, dtype=complex)
        if h.ndim != 2:
            raise ContractError("channels must be a (K, n_tx) array")
        if h.shape[0] < 2:
            raise ContractError("a multicast channel needs at least 2 users")
        if not np.all(np.isfinite(h)):
            raise ContractError("channels contain non-finite entries")
        h.setflags(write=False)
        object.__setattr__(self, "channels", h)

    @property
    def users(self):
        return self.channels.shape[0]

    @property
    def n_tx(self):
        return self.channels.shape[1]

    def gains(self):
        """Squared norms ``||h_k||^2``."""
        return np.sum(np.abs(self.channels) ** 2, axis=1)

    def gram(self):
        """Stack of ``H_k = h_k h_k^H``, shape ``(K, N_t, N_t)``."""
        h = self.channels
        return h[:, :, None] * h[:, None, :].conj()

    def check(self, cfg):
        if self.n_tx != cfg.n_tx:
            raise ContractError(
                f"channel length {self.n_tx} does not match n_tx={cfg.n_tx}"
            )


@dataclass(frozen=True)
class CrPoint:
    """One (CRB, rate) pair; ``crb`` may be ``inf``."""

    crb: float
    rate: float


def quad_forms(s, ch):
    """``h_k^H S h_k`` for every user (real array of length K)."""
    h = ch.channels
    return np.real(np.einsum("ki,ij,kj->k", h.conj(), s, h))


def user_snrs(s, ch, cfg):
    """Per-user received SNR ``h_k^H S h_k / sigma^2``."""
    s = check_hermitian(s)
    ch.check(cfg)
    return quad_forms(s, ch) / cfg.noise_comm


def multicast_rate(s, ch, cfg):
    """Common-message rate ``min_k log2(1 + h_k^H S h_k / sigma^2)`` in bits."""
    snr = user_snrs(s, ch, cfg)
    return float(np.log2(1.0 + max(np.min(snr), 0.0)))


def crb_trace(s, cfg):
    """Trace of the CRB matrix for the target response, ``inf`` if S is singular."""
    s = check_hermitian(s)
    if s.shape[0] != cfg.n_tx:
        raise ContractError("covariance dimension does not match n_tx")
    return cfg.crb_scale * trace_inverse(s)


def sinr_with_sensing(w, s_s, h, cfg):
    """SINR of the information beam ``w`` when ``S_s`` acts as interference."""
    w = np.asarray(w, dtype=complex)
    h = np.asarray(h, dtype=complex)
    s_s = check_hermitian(s_s)
    if not (w.shape == h.shape == (s_s.shape[0],)):
        raise ContractError("dimension mismatch between w, h and S_s")
    signal = abs(np.vdot(h, w)) ** 2
    interference = float(np.real(np.vdot(h, s_s @ h)))
    return signal / (interference + cfg.noise_comm)


def beamforming_sinrs(w, s_s, ch, cfg):
    w = np.asarray(w, dtype=complex)
    s_s = check_hermitian(s_s)
    ch.check(cfg)
    if w.shape != (cfg.n_tx,) or s_s.shape != (cfg.n_tx, cfg.n_tx):
        raise ContractError("dimension mismatch between w, S_s and n_tx")
    signal = np.abs(ch.channels.conj() @ w) ** 2
    return signal / (quad_forms(s_s, ch) + cfg.noise_comm)


def beamforming_rate(w, s_s, ch, cfg):
    """Multicast rate of one information beam plus a dedicated sensing covariance."""
    return float(np.log2(1.0 + np.min(beamforming_sinrs(w, s_s, ch, cfg))))


def generate_rayleigh_channels(users, n_tx, seed, normalize=True):
    """Draw ``users`` Rayleigh channel vectors of length ``n_tx``.

    Entries are i.i.d. CN(0, 1).  With ``normalize`` (the default), each
    vector is then rescaled to ``||h_k||^2 = n_tx``: the direction stays
    Rayleigh-isotropic and every user sees the same average per-antenna gain
    of 1.  ``normalize=False`` keeps the raw i.i.d. draw.
    """
    if users < 2:
        raise ContractError("need at least 2 users")
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((users, n_tx)) + 1j * rng.standard_normal((users, n_tx)))
    h /= math.sqrt(2.0)
    if normalize:
        h *= math.sqrt(n_tx) / np.linalg.norm(h, axis=1, keepdims=True)
    return ChannelSet(h)


def isotropic_covariance(cfg):
    return (cfg.power / cfg.n_tx) * np.eye(cfg.n_tx, dtype=complex)


def write_channels_csv(ch, path):
    """One row per user: ``re(h_1), im(h_1), ..., re(h_Nt), im(h_Nt)``.

    ``path`` may also be an open text file.
    """
    n = ch.n_tx
    header = [f"{part}_{i + 1}" for i in range(n) for part in ("re", "im")]
    fh = path if hasattr(path, "write") else open(path, "w", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in ch.channels:
            writer.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])
    finally:
        if fh is not path:
            fh.close()


def read_channels_csv(path):
    """Inverse of :func:`write_channels_csv`; the header row is optional."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if rows:
                    raise ContractError(f"non-numeric channel row in {path}")
                continue  # header
    if not rows:
        raise ContractError(f"no channel rows in {path}")
    data = np.array(rows)
    if data.shape[1] % 2:
        raise ContractError("channel CSV needs an even number of columns")
    return ChannelSet(data[:, 0::2] + 1j * data[:, 1::2])
