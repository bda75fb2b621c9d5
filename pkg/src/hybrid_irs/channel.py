"""Channel realizations from 3D node geometry.

Large-scale gain follows the log-distance law ``PL(d) = PL0 - 10 alpha log10(d / d0)``
in dB; small-scale fading is i.i.d. CN(0, 1) per entry.  Every entry of a link is
``sqrt(10**(PL/10)) * CN(0, 1)``.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64).  The draw order
inside :func:`draw_channels` is fixed: h_si, h_sr, H_ir, h_id, h_rd, each as a real
normal block followed by an imaginary normal block.  Results are therefore
bit-reproducible for a given numpy build.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .model import HybridConfig


def _point(p) -> tuple[float, float, float]:
    t = tuple(float(v) for v in p)
    if len(t) != 3:
        raise ValueError(f"expected a 3D coordinate, got {p!r}")
    return t


@dataclass(frozen=True)
class Geometry:
    """Node positions (meters) and per-link path-loss parameters.

    Defaults reproduce the simulation setup: S at the origin, D at (0, 100, 0),
    the IRS at (-10, 50, 20) and the relay at (10, 50, 10); exponent 2 on the
    IRS links and 3 on the S-relay and relay-D links.
    """

    pos_s: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pos_d: tuple[float, float, float] = (0.0, 100.0, 0.0)
    pos_irs: tuple[float, float, float] = (-10.0, 50.0, 20.0)
    pos_relay: tuple[float, float, float] = (10.0, 50.0, 10.0)
    alpha_si: float = 2.0
    alpha_ir: float = 2.0
    alpha_id: float = 2.0
    alpha_sr: float = 3.0
    alpha_rd: float = 3.0
    pl0_db: float = -30.0
    d0: float = 1.0

    def __post_init__(self):
        for name in ("pos_s", "pos_d", "pos_irs", "pos_relay"):
            object.__setattr__(self, name, _point(getattr(self, name)))
        for name in ("alpha_si", "alpha_ir", "alpha_id", "alpha_sr", "alpha_rd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")
        for name, d in self.distances().items():
            if not d > 0:
                raise ValueError(f"link {name} has zero length")

    def distances(self) -> dict[str, float]:
        s, d = np.array(self.pos_s), np.array(self.pos_d)
        irs, relay = np.array(self.pos_irs), np.array(self.pos_relay)
        return {
            "si": float(np.linalg.norm(irs - s)),
            "sr": float(np.linalg.norm(relay - s)),
            "ir": float(np.linalg.norm(relay - irs)),
            "id": float(np.linalg.norm(d - irs)),
            "rd": float(np.linalg.norm(d - relay)),
        }

    def link_gains(self) -> dict[str, float]:
        """Linear power gain of each link, keyed by ``si, sr, ir, id, rd``."""
        dist = self.distances()
        return {
            k: 10.0 ** (path_loss_db(dist[k], getattr(self, f"alpha_{k}"), self) / 10.0)
            for k in dist
        }

    replace = replace


def path_loss_db(d: float, alpha: float, geometry: Geometry | None = None) -> float:
    """Log-distance path loss ``PL0 - 10 alpha log10(d / d0)`` in dB."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    g = geometry if geometry is not None else Geometry()
    return g.pl0_db - 10.0 * alpha * np.log10(d / g.d0)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """The five complex channels of one realization.

    ``h_si`` (N,) source to IRS, ``h_sr`` (M,) source to relay, ``H_ir`` (M, N)
    IRS to relay, ``h_id`` (N,) IRS to destination, ``h_rd`` (M,) relay to
    destination.  Conjugate transposes follow the signal model, e.g. the
    relay-to-IRS channel is ``H_ir^H``.
    """

    h_si: np.ndarray
    h_sr: np.ndarray
    H_ir: np.ndarray
    h_id: np.ndarray
    h_rd: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("h_si", "h_sr", "H_ir", "h_id", "h_rd"):
            arr = np.array(getattr(self, name), dtype=complex)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        M, N = self.H_ir.shape
        if self.h_si.shape != (N,) or self.h_id.shape != (N,):
            raise ValueError("h_si/h_id must have length N")
        if self.h_sr.shape != (M,) or self.h_rd.shape != (M,):
            raise ValueError("h_sr/h_rd must have length M")

    @property
    def M(self) -> int:
        return self.H_ir.shape[0]

    @property
    def N(self) -> int:
        return self.H_ir.shape[1]

    def without_irs(self) -> "ChannelSet":
        """Same relay links, IRS links zeroed (relay-only network)."""
        return ChannelSet(
            h_si=np.zeros_like(self.h_si),
            h_sr=self.h_sr,
            H_ir=np.zeros_like(self.H_ir),
            h_id=np.zeros_like(self.h_id),
            h_rd=self.h_rd,
            meta={**self.meta, "irs": "removed"},
        )


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def draw_channels(geometry: Geometry, config: "HybridConfig", seed) -> ChannelSet:
    """Draw one Rayleigh realization for ``config.M`` antennas and ``config.N`` elements.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    M, N = config.M, config.N
    if M < 1 or N < 1:
        raise ValueError("need M >= 1 and N >= 1")
    rng = np.random.default_rng(seed)
    gain = geometry.link_gains()
    amp = {k: np.sqrt(v) for k, v in gain.items()}
    return ChannelSet(
        h_si=amp["si"] * _cn(rng, N),
        h_sr=amp["sr"] * _cn(rng, M),
        H_ir=amp["ir"] * _cn(rng, (M, N)),
        h_id=amp["id"] * _cn(rng, N),
        h_rd=amp["rd"] * _cn(rng, M),
    )
