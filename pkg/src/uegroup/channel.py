"""Beam-space channel synthesis for a dual-polarized DFT-beam planar array.

Each UE layer ``m`` sees, on beam ``i`` of polarization group ``pol``,

    h[m, pol, i](f) = sum_p psi_pol_i(az_p, el_p, f) * amp[p, m] * exp(-2j*pi*f*delay_p)

with ``f`` the absolute RF frequency. Rows of a :class:`CtfMatrix` are laid out
layer-major, H beams before V beams inside each layer.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .scene import Pose, Scenario, ScenarioConfig, course_over_ground

SPEED_OF_LIGHT = 299_792_458.0

N_PRB = 273
PRB_BANDWIDTH = 12 * 30e3


@dataclass
class ArrayConfig:
    n_beams_v: int = 32
    n_beams_h: int = 32
    elements_per_pol: int = 32
    element_spacing: float = 0.5
    carrier_frequency: float = 3.85e9
    bandwidth: float = 100e6
    ue_layers: int = 2
    # planar layout per polarization group: columns along x, rows along z
    n_cols: int = 8
    n_rows: int = 4
    # UE element pattern floor (front/back amplitude ratio); 1.0 is omnidirectional
    ue_pattern_floor: float = 0.1

    def validate(self) -> None:
        if self.n_cols * self.n_rows != self.elements_per_pol:
            raise ValueError(
                f"planar layout {self.n_cols}x{self.n_rows} does not hold {self.elements_per_pol} elements"
            )
        for name in ("n_beams_v", "n_beams_h"):
            nb = getattr(self, name)
            if not 1 <= nb <= self.elements_per_pol:
                raise ValueError(f"{name}={nb} must be in [1, elements_per_pol]")
        if self.ue_layers < 1:
            raise ValueError("ue_layers must be >= 1")
        if not 0.0 <= self.ue_pattern_floor <= 1.0:
            raise ValueError("ue_pattern_floor must be in [0, 1]")

    @property
    def beams_per_layer(self) -> int:
        return self.n_beams_h + self.n_beams_v

    @property
    def n_rows_ctf(self) -> int:
        return self.ue_layers * self.beams_per_layer

    def beam_count(self, pol: str) -> int:
        return self.n_beams_v if pol == "V" else self.n_beams_h


@dataclass
class MultipathComponent:
    delay: float
    azimuth: float
    elevation: float
    amplitude_per_layer: np.ndarray

    def __post_init__(self):
        self.amplitude_per_layer = np.atleast_1d(np.asarray(self.amplitude_per_layer, dtype=complex))
        if self.delay < 0:
            raise ValueError(f"negative path delay {self.delay}")
        mag = np.abs(self.amplitude_per_layer)
        if not np.all(np.isfinite(mag)) or np.any(mag <= 0):
            raise ValueError("path amplitudes must be finite and non-zero")


@dataclass
class CtfMatrix:
    """Complex (layers * beams) x F channel, rows ``[H l0, V l0, H l1, V l1, ...]``."""

    values: np.ndarray
    freqs: np.ndarray
    n_beams_h: int = 32
    n_beams_v: int = 32
    ue_layers: int = 2
    layout: tuple[str, ...] = field(default=("layer", "pol", "beam"))

    def block(self, layer: int, pol: str) -> np.ndarray:
        base = layer * (self.n_beams_h + self.n_beams_v)
        if pol == "H":
            return self.values[base:base + self.n_beams_h]
        return self.values[base + self.n_beams_h:base + self.n_beams_h + self.n_beams_v]


def prb_frequencies(array: ArrayConfig | None = None, n_prb: int = N_PRB) -> np.ndarray:
    """Centre frequency of each PRB (30 kHz SCS, 12 subcarriers) around the carrier."""
    fc = (array or ArrayConfig()).carrier_frequency
    return fc + (np.arange(n_prb) - (n_prb - 1) / 2.0) * PRB_BANDWIDTH


def prsg_frequencies(array: ArrayConfig | None = None) -> np.ndarray:
    """The 46 subgroup centres left after pair averaging and every-third selection."""
    from .srs import prb_pair_average, prsg_downsample

    return prsg_downsample(prb_pair_average(prb_frequencies(array)))


def _beam_indices(array: ArrayConfig, beam_index: int) -> tuple[int, int]:
    return divmod(beam_index, array.n_rows)


def _spatial_freq(k, n):
    # centred DFT grid; k = n/2 is broadside
    return (np.asarray(k) - n // 2) / n


def beam_steering(array: ArrayConfig, beam_index: int) -> tuple[float, float]:
    """(azimuth, elevation) in radians where a beam peaks at the carrier.

    The array lies in the x-z plane looking along +y, so broadside is azimuth pi/2.
    """
    kx, kz = _beam_indices(array, beam_index)
    ux = _spatial_freq(kx, array.n_cols) / array.element_spacing
    uz = _spatial_freq(kz, array.n_rows) / array.element_spacing
    if abs(uz) > 1 or ux * ux + uz * uz > 1:
        raise ValueError(f"beam {beam_index} points outside the visible region")
    el = np.arcsin(uz)
    az = np.arccos(ux / np.cos(el)) if np.cos(el) > 0 else np.pi / 2
    return float(az), float(el)


def beam_response(array: ArrayConfig, beam_index: int, pol: str, azimuth: float, elevation: float, f: float) -> complex:
    """Array factor of one DFT beam, summed element by element."""
    if pol not in ("V", "H"):
        raise ValueError(f"unknown polarization {pol!r}")
    if not 0 <= beam_index < array.beam_count(pol):
        raise ValueError(f"beam_index {beam_index} out of range for pol {pol}")
    kx, kz = _beam_indices(array, beam_index)
    qx = _spatial_freq(kx, array.n_cols)
    qz = _spatial_freq(kz, array.n_rows)
    scale = f / array.carrier_frequency * array.element_spacing
    ux = np.cos(elevation) * np.cos(azimuth)
    uz = np.sin(elevation)
    nx, nz = np.meshgrid(np.arange(array.n_cols), np.arange(array.n_rows), indexing="ij")
    phase = 2 * np.pi * ((scale * ux - qx) * nx + (scale * uz - qz) * nz)
    return complex(np.sum(np.exp(1j * phase)))


def beam_responses(array: ArrayConfig, azimuth, elevation, freqs) -> np.ndarray:
    """Responses of the whole codebook, shape ``azimuth.shape + (F, elements_per_pol)``."""
    az = np.asarray(azimuth, dtype=float)[..., None]
    el = np.asarray(elevation, dtype=float)[..., None]
    scale = np.asarray(freqs, dtype=float) / array.carrier_frequency * array.element_spacing
    ux = np.cos(el) * np.cos(az) * scale
    uz = np.sin(el) * scale
    nx = np.arange(array.n_cols)
    nz = np.arange(array.n_rows)
    # separable: (element phase ramp) @ (conjugate DFT weights), per axis
    wx = np.exp(-2j * np.pi * np.outer(nx, _spatial_freq(nx, array.n_cols)))
    wz = np.exp(-2j * np.pi * np.outer(nz, _spatial_freq(nz, array.n_rows)))
    sx = np.exp(2j * np.pi * ux[..., None] * nx) @ wx
    sz = np.exp(2j * np.pi * uz[..., None] * nz) @ wz
    psi = sx[..., :, None] * sz[..., None, :]
    return psi.reshape(psi.shape[:-2] + (array.n_cols * array.n_rows,))


def _ue_gain(bearing_deg, heading_deg, layer: int, n_layers: int, floor: float):
    boresight = heading_deg + 360.0 * layer / n_layers
    alpha = np.radians(bearing_deg - boresight)
    return floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(alpha))


def _scene_phases(scene: ScenarioConfig, n_layers: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-scatterer reflection phases and per-path layer phase offsets, seeded by the scene."""
    rng = np.random.default_rng([scene.rng_seed, 7919])
    n_paths = len(scene.scatterers) + 1
    reflect = rng.uniform(0, 2 * np.pi, len(scene.scatterers))
    layer = np.zeros((n_paths, n_layers))
    layer[:, 1:] = rng.uniform(0, 2 * np.pi, (n_paths, n_layers - 1))
    return reflect, layer


@dataclass
class MultipathBatch:
    """Vectorized multipath for T poses and P paths; ``amplitude`` is (T, P, layers)."""

    delay: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray
    amplitude: np.ndarray

    def components(self, k: int = 0) -> list[MultipathComponent]:
        return [
            MultipathComponent(float(self.delay[k, p]), float(self.azimuth[k, p]), float(self.elevation[k, p]),
                               self.amplitude[k, p].copy())
            for p in range(self.delay.shape[1])
        ]


def _arrival_angles(src: np.ndarray, bs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = src - bs
    horiz = np.hypot(d[..., 0], d[..., 1])
    return np.arctan2(d[..., 1], d[..., 0]), np.arctan2(d[..., 2], horiz)


def multipath_batch(positions: np.ndarray, headings: np.ndarray, scene: ScenarioConfig,
                    array: ArrayConfig | None = None) -> MultipathBatch:
    """Geometric multipath for many UE positions (T, 3) with headings in degrees."""
    array = array or ArrayConfig()
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    heading = np.atleast_1d(np.asarray(headings, dtype=float))
    bs = np.asarray(scene.bs_position, dtype=float)
    scat = np.asarray(scene.scatterers, dtype=float).reshape(-1, 3)
    lam = SPEED_OF_LIGHT / array.carrier_frequency
    n_layers = array.ue_layers
    reflect, layer_phase = _scene_phases(scene, n_layers)

    delays, azs, els, amps = [], [], [], []
    p_offset = 0
    d_bs = np.linalg.norm(pos - bs, axis=1)
    if np.any(d_bs < 1e-9):
        raise ValueError("UE coincides with the base station")
    if scene.scenario is Scenario.LOS:
        az, el = _arrival_angles(pos, bs)
        bearing = course_over_ground(bs[0] - pos[:, 0], bs[1] - pos[:, 1])
        base = 1.0 / d_bs * np.exp(-2j * np.pi * d_bs / lam)
        gains = np.stack([
            _ue_gain(bearing, heading, m, n_layers, array.ue_pattern_floor) * np.exp(1j * layer_phase[0, m])
            for m in range(n_layers)
        ], axis=-1)
        delays.append(d_bs / SPEED_OF_LIGHT)
        azs.append(np.broadcast_to(az, d_bs.shape))
        els.append(np.broadcast_to(el, d_bs.shape))
        amps.append(base[:, None] * gains)
    p_offset = 1
    for s, sc in enumerate(scat):
        d1 = np.linalg.norm(pos - sc, axis=1)
        if np.any(d1 < 1e-9):
            raise ValueError(f"UE coincides with scatterer {s}")
        d2 = float(np.linalg.norm(sc - bs))
        if d2 < 1e-9:
            raise ValueError(f"scatterer {s} coincides with the base station")
        az, el = _arrival_angles(sc, bs)
        bearing = course_over_ground(sc[0] - pos[:, 0], sc[1] - pos[:, 1])
        base = 1.0 / (d1 * d2) * np.exp(1j * reflect[s])
        gains = np.stack([
            _ue_gain(bearing, heading, m, n_layers, array.ue_pattern_floor) * np.exp(1j * layer_phase[p_offset + s, m])
            for m in range(n_layers)
        ], axis=-1)
        delays.append((d1 + d2) / SPEED_OF_LIGHT)
        azs.append(np.full(len(pos), az))
        els.append(np.full(len(pos), el))
        amps.append(base[:, None] * gains)
    if not delays:
        raise ValueError("scene produces no propagation paths")
    return MultipathBatch(
        delay=np.stack(delays, axis=1),
        azimuth=np.stack(azs, axis=1),
        elevation=np.stack(els, axis=1),
        amplitude=np.stack(amps, axis=1),
    )


def compute_multipath(pose: Pose, scene: ScenarioConfig, array: ArrayConfig | None = None) -> list[MultipathComponent]:
    """Direct path (LoS only) followed by one single-bounce path per scatterer."""
    batch = multipath_batch(np.array([[pose.x, pose.y, pose.z]]), np.array([pose.heading]), scene, array)
    return batch.components(0)


def _split(x):
    # Veltkamp split into two 26-bit halves
    c = 134217729.0 * x
    hi = c - (c - x)
    return hi, x - hi


def delay_phase_cycles(delay, freqs) -> np.ndarray:
    """Fractional part of ``delay * freqs`` in cycles, free of product rounding.

    At RF frequencies ``f * tau`` runs to thousands of cycles, so the rounding of
    the plain product alone would shift the phase by ~1e-11 rad. The error-free
    product (Dekker) keeps the reduced phase accurate to ~1e-16 cycles.
    """
    a = np.asarray(delay, dtype=float)[..., None]
    b = np.asarray(freqs, dtype=float)
    prod = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - prod) + ah * bl + al * bh) + al * bl
    return (prod - np.round(prod)) + err


def synthesize_batch(delay, azimuth, elevation, amplitude, array: ArrayConfig, freqs) -> np.ndarray:
    """Vectorized channel over T snapshots: returns (T, layers, beams_h + beams_v, F)."""
    freqs = np.asarray(freqs, dtype=float)
    psi = beam_responses(array, azimuth, elevation, freqs)  # (T, P, F, E)
    rot = np.exp(-2j * np.pi * delay_phase_cycles(delay, freqs))  # (T, P, F)
    weighted = np.asarray(amplitude)[..., :, None] * rot[..., None, :]  # (T, P, M, F)
    beams = np.einsum("tpfe,tpmf->tmef", psi, weighted, optimize=True)
    return np.concatenate([beams[:, :, :array.n_beams_h], beams[:, :, :array.n_beams_v]], axis=2)


def synthesize_ctf(mpcs: Sequence[MultipathComponent], array: ArrayConfig, freq_grid) -> CtfMatrix:
    """Beam-space channel matrix for one snapshot."""
    if len(mpcs) == 0:
        raise ValueError("no multipath components: channel undefined")
    array.validate()
    freqs = np.asarray(freq_grid, dtype=float)
    if freqs.ndim != 1 or freqs.size == 0:
        raise ValueError("freq_grid must be a non-empty 1-D sequence")
    amps = np.stack([np.broadcast_to(c.amplitude_per_layer, (array.ue_layers,)) for c in mpcs])
    delay = np.array([[c.delay for c in mpcs]])
    az = np.array([[c.azimuth for c in mpcs]])
    el = np.array([[c.elevation for c in mpcs]])
    h = synthesize_batch(delay, az, el, amps[None], array, freqs)[0]
    return CtfMatrix(
        values=h.reshape(array.n_rows_ctf, freqs.size),
        freqs=freqs,
        n_beams_h=array.n_beams_h,
        n_beams_v=array.n_beams_v,
        ue_layers=array.ue_layers,
    )


def add_awgn(values: np.ndarray, snr_db: float, rng: np.random.Generator, axis_from: int = 1) -> np.ndarray:
    """Complex Gaussian noise at ``snr_db`` relative to each snapshot's mean power.

    Snapshots run along the leading ``axis_from`` axes.
    """
    axes = tuple(range(axis_from, values.ndim))
    power = np.mean(np.abs(values) ** 2, axis=axes, keepdims=True)
    sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
    noise = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    return values + sigma * noise


def write_ctf_binary(path: str | Path, values: np.ndarray, meta: dict | None = None) -> Path:
    """Little-endian float32 re/im interleaved, row-major, plus ``<path>.json`` sidecar."""
    path = Path(path)
    values = np.ascontiguousarray(values)
    inter = np.empty(values.shape + (2,), dtype="<f4")
    inter[..., 0] = values.real
    inter[..., 1] = values.imag
    path.write_bytes(inter.tobytes(order="C"))
    sidecar = {"shape": list(values.shape), "dtype": "complex64", "layout": "float32 re/im interleaved, row-major, little-endian"}
    sidecar.update(meta or {})
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return side


def read_ctf_binary(path: str | Path) -> np.ndarray:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(tuple(sidecar["shape"]) + (2,))
    return raw[..., 0].astype(np.complex64) + 1j * raw[..., 1].astype(np.complex64)


def write_ctf_csv(path: str | Path, ctf: CtfMatrix) -> None:
    """Long-format CSV ``row,layer,pol,beam,freq,re,im`` for small matrices."""
    per_layer = ctf.n_beams_h + ctf.n_beams_v
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "layer", "pol", "beam", "freq", "re", "im"])
        for r in range(ctf.values.shape[0]):
            layer, within = divmod(r, per_layer)
            pol, beam = ("H", within) if within < ctf.n_beams_h else ("V", within - ctf.n_beams_h)
            for k, f in enumerate(ctf.freqs):
                v = ctf.values[r, k]
                w.writerow([r, layer, pol, beam, repr(float(f)), repr(float(v.real)), repr(float(v.imag))])
