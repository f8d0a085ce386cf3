"""Heading controller: row-center column -> smoothed (v_x, omega_z) command."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional


class VelocityCommand(NamedTuple):
    v_x: float
    omega_z: float


@dataclass(frozen=True)
class ControllerConfig:
    v_max: float = 0.5
    omega_max: float = 1.0
    omega_gain: float = 0.01
    ema_weight: float = 0.5
    frame_width: int = 224

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError(f"v_max must be > 0, got {self.v_max}")
        if not self.omega_max > 0:
            raise ValueError(f"omega_max must be > 0, got {self.omega_max}")
        if not self.omega_gain > 0:
            raise ValueError(f"omega_gain must be > 0, got {self.omega_gain}")
        if not 0 < self.ema_weight <= 1:
            raise ValueError(f"ema_weight must be in (0, 1], got {self.ema_weight}")
        if self.frame_width < 1:
            raise ValueError(f"frame_width must be >= 1, got {self.frame_width}")

    @classmethod
    def from_ema_buffer(cls, buffer: int, **kw) -> "ControllerConfig":
        """Build a config whose EMA weight corresponds to a span of ``buffer`` samples."""
        return cls(ema_weight=ema_weight_for_span(buffer), **kw)


def ema_weight_for_span(span: int) -> float:
    if span < 1:
        raise ValueError(f"EMA span must be >= 1, got {span}")
    return 2.0 / (span + 1)


def compute_offset(x_h: float, w: int) -> float:
    return x_h - w / 2


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def compute_command(d: float, cfg: ControllerConfig) -> VelocityCommand:
    half = cfg.frame_width / 2
    v = cfg.v_max * (1.0 - d * d / (half * half))
    w = -cfg.omega_gain * d
    return VelocityCommand(_clamp(v, 0.0, cfg.v_max), _clamp(w, -cfg.omega_max, cfg.omega_max))


def stop_command() -> VelocityCommand:
    return VelocityCommand(0.0, 0.0)


class CommandFilter:
    """Exponential moving average over successive velocity commands.

    The first sample passes through unchanged and seeds the filter.
    """

    def __init__(self, weight: float):
        if not 0 < weight <= 1:
            raise ValueError(f"EMA weight must be in (0, 1], got {weight}")
        self.weight = weight
        self.previous: Optional[VelocityCommand] = None

    @property
    def initialized(self) -> bool:
        return self.previous is not None

    def reset(self) -> None:
        self.previous = None

    def __call__(self, cmd: VelocityCommand) -> VelocityCommand:
        return ema_filter(self, cmd, self.weight)


def ema_filter(state: CommandFilter, cmd: VelocityCommand, weight: float) -> VelocityCommand:
    if not 0 < weight <= 1:
        raise ValueError(f"EMA weight must be in (0, 1], got {weight}")
    cmd = VelocityCommand(*cmd)
    if state.previous is None:
        out = cmd
    else:
        out = VelocityCommand(*(_blend(a, b, weight) for a, b in zip(state.previous, cmd)))
    state.previous = out
    return out


def _blend(prev: float, new: float, weight: float) -> float:
    # clamped so rounding can never leave the segment between the two values
    return _clamp((1 - weight) * prev + weight * new, min(prev, new), max(prev, new))


class HeadingController:
    """Ties offset, command law, and smoothing together for one control loop."""

    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.filter = CommandFilter(cfg.ema_weight)

    def update(self, x_h: Optional[float]) -> tuple[VelocityCommand, VelocityCommand, Optional[float]]:
        """Return ``(raw, smoothed, d)``; ``x_h=None`` commands a stop."""
        if x_h is None:
            raw, d = stop_command(), None
        else:
            d = compute_offset(x_h, self.cfg.frame_width)
            raw = compute_command(d, self.cfg)
        return raw, self.filter(raw), d
