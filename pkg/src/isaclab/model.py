"""System configuration and channel/target/symbol generation.

Everything random takes an explicit ``numpy.random.Generator`` so that a
(config, seed) pair fully determines every generated object.  Angles are
radians internally; config files carry degrees and are converted on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, EmptyScene
from .hermitian import HermitianMatrix, sqrt_psd

__all__ = [
    "SystemConfig",
    "TargetScene",
    "ChannelSet",
    "SymbolBlock",
    "dbm_to_watt",
    "steering_vector",
    "target_covariance",
    "pathloss_gain",
    "gen_channels",
    "gen_symbols",
    "sample_covariance",
    "draw_target",
    "coherence_factor",
]

SPEED_OF_LIGHT = 299792458.0  # m/s


def dbm_to_watt(p_dbm: float) -> float:
    """Convert a power level in dBm to watts: 10**((p - 30) / 10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters for one simulated ISAC link.

    ``sinr_threshold_db=None`` means no SINR constraint at all (linear
    threshold 0), which is distinct from 0 dB (linear threshold 1).

    ``normalization_mode`` selects how the frame length enters analytic MSE
    expressions: ``"paper"`` evaluates them with the per-frame covariance as
    printed, ``"physical"`` with the extra factor L that the sample covariance
    of an L-slot frame actually accumulates.  Empirical/analytic cross-checks
    always run in physical mode.
    """

    n_tx: int = 8
    n_rx: int = 4
    n_users: int = 4
    frame_len: int = 16
    power_budget_dbm: float = 40.0
    noise_comm_dbm: float = -100.0
    noise_sense_dbm: float = -100.0
    sinr_threshold_db: float | None = None
    carrier_hz: float = 2.4e9
    pathloss_exponent: float = 2.2
    user_center_m: tuple[float, float] = (40.0, 0.0)
    user_radius_m: float = 10.0
    rng_seed: int = 0
    normalization_mode: str = "paper"
    assume_sic: bool = False

    def __post_init__(self):
        if not (1 <= self.n_users <= self.n_tx <= self.frame_len):
            raise ValueError(
                f"need 1 <= K <= N_T <= L, got K={self.n_users}, "
                f"N_T={self.n_tx}, L={self.frame_len}"
            )
        if self.n_rx < 1:
            raise ValueError("n_rx must be positive")
        if self.user_radius_m <= 0 or self.pathloss_exponent <= 0:
            raise ValueError("user_radius_m and pathloss_exponent must be positive")
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")
        if self.normalization_mode not in ("paper", "physical"):
            raise ValueError("normalization_mode must be 'paper' or 'physical'")

    @property
    def power_budget_w(self) -> float:
        return dbm_to_watt(self.power_budget_dbm)

    @property
    def noise_comm_w(self) -> float:
        return dbm_to_watt(self.noise_comm_dbm)

    @property
    def noise_sense_w(self) -> float:
        return dbm_to_watt(self.noise_sense_dbm)

    @property
    def sinr_threshold_lin(self) -> float:
        if self.sinr_threshold_db is None:
            return 0.0
        return 10.0 ** (self.sinr_threshold_db / 10.0)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def with_(self, **kwargs) -> "SystemConfig":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)


def coherence_factor(cfg: SystemConfig) -> float:
    """Factor c multiplying the waveform covariance in analytic MSE formulas.

    1 in paper mode; the frame length L in physical mode (what an L-slot
    Monte-Carlo frame actually realizes).
    """
    return float(cfg.frame_len) if cfg.normalization_mode == "physical" else 1.0


@dataclass(frozen=True)
class TargetScene:
    """Extended-target scene: scatterer angles (rad) with RCS amplitudes.

    ``diag_load`` adds a multiple of the identity to the transmit covariance,
    available for deliberately regularized or rank-deficient scenes.
    """

    scatterers: tuple[tuple[float, float], ...]
    diag_load: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(tuple(s) for s in self.scatterers))
        if self.diag_load < 0:
            raise ValueError("diag_load must be >= 0")
        for _, rcs in self.scatterers:
            if rcs < 0:
                raise ValueError("RCS amplitudes must be >= 0")

    @property
    def angles_rad(self) -> np.ndarray:
        return np.array([a for a, _ in self.scatterers], dtype=float)

    @property
    def rcs(self) -> np.ndarray:
        return np.array([r for _, r in self.scatterers], dtype=float)


@dataclass(frozen=True)
class ChannelSet:
    """Downlink channels: row k of ``h`` is h_k^H (amplitude gain, unitless)."""

    h: np.ndarray
    user_positions: np.ndarray

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True)
class SymbolBlock:
    """Orthogonal symbol streams: (1/L) S S^H = I, and S_A orthogonal to S."""

    s: np.ndarray
    s_aug: np.ndarray | None = None


def steering_vector(angle_rad: float, n_elem: int) -> np.ndarray:
    """Half-wavelength ULA response: element i = exp(j*pi*i*sin(angle))."""
    if n_elem < 1:
        raise ValueError("n_elem must be >= 1")
    idx = np.arange(n_elem)
    return np.exp(1j * np.pi * idx * math.sin(angle_rad))


def target_covariance(scene: TargetScene, n_tx: int) -> HermitianMatrix:
    """Transmit-side target covariance: sum of alpha^2 a(theta) a(theta)^H.

    The receive side is whitened (identity covariance), so the full target
    covariance is this matrix Kronecker the N_R identity; that product is
    never materialized downstream.
    """
    if len(scene.scatterers) == 0:
        raise EmptyScene("scene has no scatterers")
    a = np.column_stack([steering_vector(theta, n_tx) for theta in scene.angles_rad])
    r = (a * scene.rcs**2) @ a.conj().T
    if scene.diag_load > 0:
        r = r + scene.diag_load * np.eye(n_tx)
    return HermitianMatrix(r)


def pathloss_gain(distance_m: float, cfg: SystemConfig) -> float:
    """Power path-loss gain: free-space anchor at 1 m, exponent beyond.

    PL(d) = (lambda / (4 pi * 1m))^2 * (1m / d)^exponent
    """
    anchor = (cfg.wavelength_m / (4.0 * math.pi)) ** 2
    return anchor * distance_m ** (-cfg.pathloss_exponent)


def gen_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw user positions uniformly in the configured disk and Rayleigh channels.

    Each row is sqrt(PL(d_k)) * w_k with w_k i.i.d. standard complex Gaussian.
    """
    k, n = cfg.n_users, cfg.n_tx
    radii = cfg.user_radius_m * np.sqrt(rng.uniform(size=k))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=k)
    cx, cy = cfg.user_center_m
    pos = np.column_stack([cx + radii * np.cos(phases), cy + radii * np.sin(phases)])
    dist = np.hypot(pos[:, 0], pos[:, 1])
    w = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / math.sqrt(2.0)
    gains = np.array([pathloss_gain(d, cfg) for d in dist])
    h = np.sqrt(gains)[:, None] * w
    return ChannelSet(h=h, user_positions=pos)


def _dft_rows(count: int, frame_len: int) -> np.ndarray:
    """First ``count`` rows of the L x L unitary DFT, scaled by sqrt(L)."""
    m = np.arange(count)[:, None]
    n = np.arange(frame_len)[None, :]
    return np.exp(-2j * np.pi * m * n / frame_len)


def gen_symbols(
    cfg: SystemConfig, with_augmentation: bool = False, rng: np.random.Generator | None = None
) -> SymbolBlock:
    """Orthogonal data streams from scaled DFT rows.

    S takes the first K rows; the augmentation block (when requested) takes the
    next N_T - K rows, so the stacked block satisfies (1/L) [S; S_A][S; S_A]^H = I
    exactly.  The construction is deterministic; ``rng`` is accepted for
    interface symmetry with the other generators.
    """
    k, n, el = cfg.n_users, cfg.n_tx, cfg.frame_len
    if with_augmentation and n > el:
        raise DimensionError(f"augmentation needs N_T <= L, got N_T={n}, L={el}")
    rows = _dft_rows(n if with_augmentation else k, el)
    s = rows[:k]
    s_aug = rows[k:n] if with_augmentation else None
    return SymbolBlock(s=s, s_aug=s_aug)


def sample_covariance(x: np.ndarray, frame_len: int) -> HermitianMatrix:
    """Per-slot sample covariance (1/L) X X^H of an N_T x L waveform."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[1] != frame_len:
        raise DimensionError(f"waveform must have {frame_len} columns, got {x.shape}")
    return HermitianMatrix((x @ x.conj().T) / frame_len)


def draw_target(r_gt, n_rx: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a target response vector g ~ CN(0, R_gT kron I_{N_R}).

    Returns the column-major vectorization of the N_R x N_T response matrix;
    the sample covariance over many draws converges to R_gT kron I.
    """
    g = draw_target_batch(r_gt, n_rx, 1, rng)[0]
    return g.flatten(order="F")


def draw_target_batch(r_gt, n_rx: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Batched target draws, returned as response matrices (trials, N_R, N_T).

    Column-major vectorization of each matrix has covariance R_gT kron I_{N_R}.
    """
    root = sqrt_psd(r_gt).mat
    n_tx = root.shape[0]
    z = (
        rng.standard_normal((trials, n_rx, n_tx))
        + 1j * rng.standard_normal((trials, n_rx, n_tx))
    ) / math.sqrt(2.0)
    # G = Z conj(R^(1/2)) gives cov(vec(G)) = R kron I for column-major vec
    return z @ root.conj()
