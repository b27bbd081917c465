"""
Pulse forcings f(t, x) = p(t) g(x).

Pulse shapes are immutable and carry a regularity flag: the error estimate
for the fully discrete scheme assumes f in H1 in time, which the
rectangular pulse violates.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.constants import PULSE_KINDS
from .assembly import SpatialFunction
from .errors import TimeRangeError

logger = logging.getLogger(__name__)


class PulseKind(Enum):
    RECTANGULAR = "rectangular"
    TRAPEZOIDAL = "trapezoidal"
    GAUSSIAN = "gaussian"
    BIPHASIC_EXPONENTIAL = "biphasic-exponential"


@dataclass(frozen=True)
class PulseShape:
    """
    Temporal pulse p(t).

    Parameters by kind:
        rectangular: amplitude on [onset, onset + duration)
        trapezoidal: linear ramps of length rise_time at both ends
        gaussian: amplitude * exp(-(t - center)^2 / (2 width^2))
        biphasic-exponential: amplitude * sin(2 pi s / duration) * exp(-s / decay),
            s = t - onset, on [onset, onset + duration]
    """

    kind: PulseKind
    amplitude: float = 1.0
    onset: float = 0.0
    duration: float = 1.0
    rise_time: float = 0.0
    decay: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        for name in ("amplitude", "onset", "duration", "rise_time", "decay", "center", "width"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"Pulse {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.kind is not PulseKind.GAUSSIAN and self.duration <= 0:
            raise ValueError(f"Pulse duration must be positive, got {self.duration}")
        if self.rise_time < 0:
            raise ValueError(f"Rise time must be nonnegative, got {self.rise_time}")
        if self.kind is PulseKind.TRAPEZOIDAL:
            if self.rise_time <= 0:
                raise ValueError("Trapezoidal pulse needs a positive rise time")
            if 2.0 * self.rise_time > self.duration:
                raise ValueError(
                    f"Rise time {self.rise_time} too long for duration {self.duration} "
                    "(need 2 * rise_time <= duration)"
                )
        if self.kind is PulseKind.GAUSSIAN and self.width <= 0:
            raise ValueError(f"Gaussian width must be positive, got {self.width}")
        if self.kind is PulseKind.BIPHASIC_EXPONENTIAL and self.decay <= 0:
            raise ValueError(f"Decay constant must be positive, got {self.decay}")

    @property
    def is_h1_in_time(self) -> bool:
        return self.kind is not PulseKind.RECTANGULAR

    @property
    def compact_support(self) -> Optional[Tuple[float, float]]:
        if self.kind is PulseKind.GAUSSIAN:
            return None
        return self.onset, self.onset + self.duration

    def scaled(self, factor: float) -> "PulseShape":
        return replace(self, amplitude=factor * self.amplitude)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        A = self.amplitude
        if self.kind is PulseKind.GAUSSIAN:
            return A * np.exp(-((t - self.center) ** 2) / (2.0 * self.width ** 2))

        s = t - self.onset
        d = self.duration
        if self.kind is PulseKind.RECTANGULAR:
            return np.where((t >= self.onset) & (t < self.onset + d), A, 0.0)
        if self.kind is PulseKind.TRAPEZOIDAL:
            r = self.rise_time
            ramp = np.minimum(np.minimum(s, d - s) / r, 1.0)
            return A * np.clip(ramp, 0.0, 1.0)
        inside = (s >= 0) & (s <= d)
        s_in = np.where(inside, s, 0.0)
        return np.where(inside, A * np.sin(2.0 * np.pi * s_in / d) * np.exp(-s_in / self.decay), 0.0)

    def describe(self) -> dict:
        data = {"kind": self.kind.value, "amplitude": self.amplitude}
        if self.kind is PulseKind.GAUSSIAN:
            data.update(center=self.center, width=self.width)
        else:
            data.update(onset=self.onset, duration=self.duration)
            if self.kind is PulseKind.TRAPEZOIDAL:
                data["rise_time"] = self.rise_time
            if self.kind is PulseKind.BIPHASIC_EXPONENTIAL:
                data["decay"] = self.decay
        return data


def zero_pulse() -> PulseShape:
    return PulseShape(PulseKind.RECTANGULAR, amplitude=0.0, onset=0.0, duration=1.0)


def rectangular(amplitude: float, onset: float, duration: float) -> PulseShape:
    return PulseShape(PulseKind.RECTANGULAR, amplitude=amplitude, onset=onset, duration=duration)


def trapezoidal(amplitude: float, onset: float, duration: float, rise_time: float) -> PulseShape:
    return PulseShape(PulseKind.TRAPEZOIDAL, amplitude=amplitude, onset=onset, duration=duration,
                      rise_time=rise_time)


def gaussian(amplitude: float, center: float, width: float) -> PulseShape:
    return PulseShape(PulseKind.GAUSSIAN, amplitude=amplitude, center=center, width=width)


def biphasic_exponential(amplitude: float, onset: float, duration: float, decay: float) -> PulseShape:
    return PulseShape(PulseKind.BIPHASIC_EXPONENTIAL, amplitude=amplitude, onset=onset,
                      duration=duration, decay=decay)


# ---------------------------------------------------------------------------
# Spatial profiles
# ---------------------------------------------------------------------------

def uniform_profile(value: float = 1.0) -> SpatialFunction:
    def profile(x, y):
        return np.full(np.shape(x), value)
    return profile


def gaussian_spot(center: Sequence[float], width: float) -> SpatialFunction:
    if width <= 0:
        raise ValueError(f"Spot width must be positive, got {width}")
    cx, cy = (float(c) for c in center)

    def profile(x, y):
        return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * width ** 2))
    return profile


# ---------------------------------------------------------------------------
# Forcing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparableForcing:
    """
    f(t, x, y) = pulse(t) * profile(x, y), or a general closure f(t, x, y).

    The closure, when given, overrides the separable product.
    """

    pulse: PulseShape
    profile: SpatialFunction
    final_time: float
    closure: Optional[Callable] = None
    name: str = "forcing"

    def __post_init__(self):
        if not self.final_time > 0:
            raise ValueError(f"Final time must be positive, got {self.final_time!r}")

    @property
    def is_h1_in_time(self) -> bool:
        return self.closure is not None or self.pulse.is_h1_in_time

    def check_time(self, t: float):
        if not 0.0 <= t <= self.final_time:
            raise TimeRangeError(t, self.final_time)

    def evaluate(self, t: float, x, y) -> np.ndarray:
        self.check_time(t)
        if self.closure is not None:
            return np.broadcast_to(np.asarray(self.closure(t, x, y), dtype=float), np.shape(x))
        return self.pulse(t) * np.asarray(self.profile(x, y), dtype=float)

    def at_time(self, t: float) -> SpatialFunction:
        """The spatial function f(t, .) for load assembly."""
        self.check_time(t)
        return lambda x, y: self.evaluate(t, x, y)

    def scaled(self, factor: float) -> "SeparableForcing":
        closure = None
        if self.closure is not None:
            inner = self.closure
            closure = lambda t, x, y: factor * np.asarray(inner(t, x, y))
        return replace(self, pulse=self.pulse.scaled(factor), closure=closure)


def time_samples(pulse: PulseShape, grid) -> np.ndarray:
    """p(t^1), ..., p(t^N) on the grid nodes."""
    return np.asarray(pulse(grid.nodes[1:]), dtype=float)


def h1_warning(pulse: PulseShape) -> Optional[str]:
    if pulse.is_h1_in_time or pulse.amplitude == 0.0:
        return None
    return (
        f"{pulse.kind.value} pulse is not in H1 in time; the backward Euler error "
        "estimate does not apply (use a trapezoidal pulse as an H1 surrogate)"
    )


def pulse_catalog() -> List[dict]:
    return [
        {"kind": kind, "description": description, "h1_in_time": kind != PulseKind.RECTANGULAR.value}
        for kind, description in PULSE_KINDS
    ]
