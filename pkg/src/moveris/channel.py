"""Field-response multipath channels for the movable BS array and RIS.

Convention: every movable region is a planar square in the local x-y plane of
its array. Path ``l`` contributes phase ``kappa_l . x`` at position ``x`` with
wave-vector ``kappa_l = (2 pi / lambda) [sin(theta) cos(phi), sin(theta) sin(phi)]``.

    H   = F_RB(U)^H diag(zeta_RB) E_RB(T)          (M x N)
    h_k = F_Bu,k(U)^H sigma_Bu,k                   (M,)
    g_k = E_Ru,k(T)^H sigma_Ru,k                   (N,)

The path angles and responses are fixed per trial; only the phases move with
positions, so every channel is a smooth function of U and T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class PathGeometry:
    elevation: np.ndarray
    azimuth: np.ndarray
    wave_vectors: np.ndarray  # (L, 2) rad/m

    @classmethod
    def from_angles(cls, elevation, azimuth, wavelength: float) -> "PathGeometry":
        elevation = np.asarray(elevation, dtype=float)
        azimuth = np.asarray(azimuth, dtype=float)
        k = 2.0 * np.pi / wavelength
        kappa = k * np.stack([np.sin(elevation) * np.cos(azimuth),
                              np.sin(elevation) * np.sin(azimuth)], axis=-1)
        return cls(elevation, azimuth, kappa)

    @property
    def num_paths(self) -> int:
        return len(self.wave_vectors)


@dataclass(frozen=True)
class LinkPaths:
    """One link's multipath description.

    ``tx_geometry`` is ``None`` for user links (single-antenna transmitters have
    a scalar field response of one).
    """

    tx_geometry: PathGeometry | None
    rx_geometry: PathGeometry
    path_response: np.ndarray
    distance_m: float
    path_loss_exponent: float


@dataclass(frozen=True)
class TrialGeometry:
    ris_bs: LinkPaths
    user_bs: tuple[LinkPaths, ...]
    user_ris: tuple[LinkPaths, ...]
    user_positions: np.ndarray  # (K, 3)

    @property
    def num_users(self) -> int:
        return len(self.user_bs)


@dataclass(frozen=True)
class PositionSet:
    """Stacked 2-D positions inside the square ``[0, side]^2``."""

    coords: np.ndarray  # (n, 2)
    side: float
    min_spacing: float

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.coords)

    def with_coords(self, coords) -> "PositionSet":
        return PositionSet(coords, self.side, self.min_spacing)

    def region_residual(self) -> float:
        """Largest excursion outside the region (<= 0 when inside)."""
        c = self.coords
        return float(np.max(np.maximum(-c, c - self.side)))

    def min_distance(self) -> float:
        if len(self) < 2:
            return np.inf
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        d = np.sqrt(np.sum(diff**2, axis=-1))
        iu = np.triu_indices(len(self), 1)
        return float(d[iu].min())

    def spacing_residual(self) -> float:
        return self.min_spacing - self.min_distance()

    def is_feasible(self, tol: float = 0.0) -> bool:
        return self.region_residual() <= tol and self.spacing_residual() <= tol


@dataclass(frozen=True)
class ChannelSet:
    H: np.ndarray  # (M, N)
    h: np.ndarray  # (K, M), row k is h_k
    g: np.ndarray  # (K, N), row k is g_k
    U: np.ndarray  # positions the channels were built from
    T: np.ndarray


def _sample_geometry(num_paths: int, wavelength: float, rng: np.random.Generator) -> PathGeometry:
    elevation = np.arcsin(rng.uniform(0.0, 1.0, num_paths))
    azimuth = rng.uniform(0.0, 2.0 * np.pi, num_paths)
    return PathGeometry.from_angles(elevation, azimuth, wavelength)


def sample_path_response(num_paths: int, distance: float, alpha: float, beta0: float,
                         rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, beta0 d^-alpha / L) path coefficients."""
    var = beta0 * distance ** (-alpha) / num_paths
    z = rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths)
    return np.sqrt(var / 2.0) * z


def _sample_link(config: SystemConfig, rng, num_paths, distance, alpha, with_tx) -> LinkPaths:
    lam = config.wavelength_m
    tx = _sample_geometry(num_paths, lam, rng) if with_tx else None
    rx = _sample_geometry(num_paths, lam, rng)
    zeta = sample_path_response(num_paths, distance, alpha, config.ref_gain_beta0, rng)
    return LinkPaths(tx, rx, zeta, float(distance), float(alpha))


def drop_users(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform drops in the annulus around the RIS at the user height."""
    K = config.num_users
    r2 = rng.uniform(config.user_ring_min_m**2, config.user_ring_max_m**2, K)
    ang = rng.uniform(0.0, 2.0 * np.pi, K)
    r = np.sqrt(r2)
    cx, cy, _ = config.ris_pos
    return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang),
                     np.full(K, config.user_height_m)], axis=1)


def sample_trial_geometry(config: SystemConfig, rng: np.random.Generator) -> TrialGeometry:
    bs = np.asarray(config.bs_pos)
    ris = np.asarray(config.ris_pos)
    ple = config.path_loss_exponents
    users = drop_users(config, rng)
    ris_bs = _sample_link(config, rng, config.paths_for("ris_bs"),
                          np.linalg.norm(ris - bs), ple.ris_bs, with_tx=True)
    user_bs, user_ris = [], []
    for k in range(config.num_users):
        user_bs.append(_sample_link(config, rng, config.paths_for("user_bs"),
                                    np.linalg.norm(users[k] - bs), ple.user_bs, with_tx=False))
        user_ris.append(_sample_link(config, rng, config.paths_for("user_ris"),
                                     np.linalg.norm(users[k] - ris), ple.user_ris, with_tx=False))
    return TrialGeometry(ris_bs, tuple(user_bs), tuple(user_ris), users)


def field_response_matrix(positions, geometry: PathGeometry) -> np.ndarray:
    """``L x n`` matrix with entry ``exp(j kappa_l . x_i)``."""
    coords = positions.coords if isinstance(positions, PositionSet) else np.asarray(positions)
    return np.exp(1j * (geometry.wave_vectors @ coords.T))


def _coords(x) -> np.ndarray:
    return x.coords if isinstance(x, PositionSet) else np.asarray(x, dtype=float).reshape(-1, 2)


def assemble_channels(paths: TrialGeometry, U, T) -> ChannelSet:
    U = _coords(U)
    T = _coords(T)
    rb = paths.ris_bs
    if rb.tx_geometry is None:
        raise ValueError("RIS-BS link needs a transmit-side geometry")
    F_rb = field_response_matrix(U, rb.rx_geometry)
    E_rb = field_response_matrix(T, rb.tx_geometry)
    H = F_rb.conj().T @ (rb.path_response[:, None] * E_rb)
    h = np.stack([field_response_matrix(U, lk.rx_geometry).conj().T @ lk.path_response
                  for lk in paths.user_bs])
    g = np.stack([field_response_matrix(T, lk.rx_geometry).conj().T @ lk.path_response
                  for lk in paths.user_ris])
    return ChannelSet(H, h, g, U.copy(), T.copy())


def channel_derivatives(paths: TrialGeometry, U, T, which: str):
    """Derivatives of every channel entry w.r.t. the positions of ``which``.

    For ``which == "U"`` returns ``(dH, dh)`` with ``dH[m, n, :] = dH[m, n]/du_m``
    and ``dh[k, m, :] = dh_k[m]/du_m`` (g does not depend on U).
    For ``which == "T"`` returns ``(dH, dg)`` with ``dH[m, n, :] = dH[m, n]/dt_n``
    and ``dg[k, n, :] = dg_k[n]/dt_n`` (h does not depend on T).
    Entries not listed are identically zero.
    """
    U = _coords(U)
    T = _coords(T)
    rb = paths.ris_bs
    Fc = field_response_matrix(U, rb.rx_geometry).conj()  # (L, M)
    E = field_response_matrix(T, rb.tx_geometry)          # (L, N)
    zeta = rb.path_response
    if which == "U":
        kap = rb.rx_geometry.wave_vectors
        dH = np.einsum("lm,l,ln,ld->mnd", Fc, zeta, E, -1j * kap)
        dh = np.stack([np.einsum("lm,l,ld->md",
                                 field_response_matrix(U, lk.rx_geometry).conj(),
                                 lk.path_response, -1j * lk.rx_geometry.wave_vectors)
                       for lk in paths.user_bs])
        return dH, dh
    if which == "T":
        kap = rb.tx_geometry.wave_vectors
        dH = np.einsum("lm,l,ln,ld->mnd", Fc, zeta, E, 1j * kap)
        dg = np.stack([np.einsum("ln,l,ld->nd",
                                 field_response_matrix(T, lk.rx_geometry).conj(),
                                 lk.path_response, -1j * lk.rx_geometry.wave_vectors)
                       for lk in paths.user_ris])
        return dH, dg
    raise ValueError(f"which must be 'U' or 'T', got {which!r}")


@dataclass(frozen=True)
class ChannelJacobian:
    """Nonzero channel derivatives for one antenna/element, shape (..., 2)."""

    dH: np.ndarray  # row m of H (N, 2) for an antenna, column n (M, 2) for an element
    dh: np.ndarray  # (K, 2): d h_k[m] / du_m, zero for an element
    dg: np.ndarray  # (K, 2): d g_k[n] / dt_n, zero for an antenna


def channel_position_jacobian(paths: TrialGeometry, U, T, which: str, index: int) -> ChannelJacobian:
    U = _coords(U)
    T = _coords(T)
    count = len(U) if which == "U" else len(T)
    if not 0 <= index < count:
        raise IndexError(f"{which} index {index} out of range [0, {count})")
    K = paths.num_users
    zero = np.zeros((K, 2), dtype=complex)
    dH, dlink = channel_derivatives(paths, U, T, which)
    if which == "U":
        return ChannelJacobian(dH[index], dlink[:, index], zero)
    return ChannelJacobian(dH[:, index], zero, dlink[:, index])


def grid_layout(count: int, side: float, spacing: float) -> np.ndarray:
    """Row-major square grid with the given spacing, centred in the region."""
    cols = int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    if (max(cols, rows) - 1) * spacing > side * (1 + 1e-12):
        raise ValueError(f"{count} points at spacing {spacing} do not fit in side {side}")
    ox = (side - (cols - 1) * spacing) / 2.0
    oy = (side - (rows - 1) * spacing) / 2.0
    idx = np.arange(count)
    return np.stack([ox + (idx % cols) * spacing, oy + (idx // cols) * spacing], axis=1)


def random_positions(count: int, side: float, min_spacing: float, rng: np.random.Generator,
                     max_rejections: int = 10_000) -> PositionSet:
    """Sequential rejection sampling; falls back to a d0-spaced grid."""
    pts = np.empty((count, 2))
    n = 0
    rejections = 0
    while n < count:
        cand = rng.uniform(0.0, side, 2)
        if n == 0 or np.min(np.sum((pts[:n] - cand) ** 2, axis=1)) >= min_spacing**2:
            pts[n] = cand
            n += 1
        else:
            rejections += 1
            if rejections >= max_rejections:
                return PositionSet(grid_layout(count, side, min_spacing), side, min_spacing)
    return PositionSet(pts, side, min_spacing)
