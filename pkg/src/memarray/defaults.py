"""Accessors for the packaged default configuration files.

The package ships a frozen ten-cell device description, three storage plans
(a 60-mode run, a 250-mode run and a single-mode cross-talk scan) and the
matching noise models.  These are ordinary config files; copy and edit them
to describe other hardware.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .device import ArrayDevice
from .io import load_device, load_noise, load_plan
from .sequence import SequencePlan
from .simulate import LeakageMatrix, NoiseParams

PLANS = ("60mode", "250mode", "crosstalk")
NOISE_MODELS = ("storage", "crosstalk")


def data_path(name: str) -> Path:
    path = Path(str(resources.files("memarray").joinpath("data", name)))
    if not path.exists():
        raise FileNotFoundError(f"packaged data file missing: {name}")
    return path


def default_device_path() -> Path:
    return data_path("device_10cell.ini")


def default_plan_path(which: str) -> Path:
    if which not in PLANS:
        raise ValueError(f"unknown plan {which!r}; choose from {PLANS}")
    return data_path(f"plan_{which}.ini")


def default_noise_path(which: str) -> Path:
    if which not in NOISE_MODELS:
        raise ValueError(f"unknown noise model {which!r}; "
                         f"choose from {NOISE_MODELS}")
    return data_path(f"noise_{which}.ini")


def load_default_device() -> ArrayDevice:
    return load_device(default_device_path())


def load_default_plan(which: str) -> SequencePlan:
    return load_plan(default_plan_path(which))


def load_default_noise(which: str) -> tuple[NoiseParams, LeakageMatrix | None]:
    device = load_default_device()
    return load_noise(default_noise_path(which),
                      default_dark_rate=device.dark_count_rate)
