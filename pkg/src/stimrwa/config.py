"""Strict JSON scenario configuration.

Every physical quantity carries its unit in the key name. Unknown keys are
rejected at every nesting level.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --------------------------------------------------------------------------
# physics blocks


class ThreeFlavourPhysics(_Strict):
    dm2_21_eV2: float = 7.5e-5
    dm2_32_eV2: float = 2.32e-3
    theta12_deg: float = 34.0
    theta13_deg: float = 9.0
    theta23_deg: float = 45.0
    E_MeV: float = Field(5.0, gt=0)
    Vstar_erg: float = 6e-25
    A1: float = 0.1
    A2: float = 0.5
    q1_cm_inv: Optional[float] = Field(None, gt=0)
    q2_cm_inv: Optional[float] = Field(None, gt=0)

    def params(self, q1: float | None = None):
        from .neutrino import OscillationParams

        return OscillationParams(
            dm2_21=self.dm2_21_eV2,
            dm2_32=self.dm2_32_eV2,
            theta12=np.radians(self.theta12_deg),
            theta13=np.radians(self.theta13_deg),
            theta23=np.radians(self.theta23_deg),
            E=self.E_MeV,
            Vstar=self.Vstar_erg,
            A1=self.A1,
            A2=self.A2,
            q1=self.q1_cm_inv if q1 is None else q1,
            q2=self.q2_cm_inv,
        )


class SelfIntPhysics(_Strict):
    mu_erg: float = 1.682e-21
    alpha: float = Field(1.0, ge=0, le=1)
    dm2_eV2: float = 2.43e-3
    theta_deg: float = 1.0
    E_MeV: float = Field(20.0, gt=0)

    def params(self):
        from .evolution import SelfInteractionParams

        return SelfInteractionParams(
            mu=self.mu_erg, alpha=self.alpha, dm2=self.dm2_eV2, theta=np.radians(self.theta_deg), E=self.E_MeV
        )


# --------------------------------------------------------------------------
# numerics blocks


class TransparencyNumerics(_Strict):
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-12, gt=0)
    samples: int = Field(2001, ge=2)
    r_max_cm: Optional[float] = Field(None, gt=0)
    rabi_half_periods: float = Field(1.0, gt=0)
    radius: int = Field(2, ge=0)


class ScanSettings(_Strict):
    q1_min_cm_inv: Optional[float] = Field(None, gt=0)
    q1_max_cm_inv: Optional[float] = Field(None, gt=0)
    span_rel: float = Field(1e-4, gt=0)
    steps: int = Field(101, ge=1)


class ScanNumerics(_Strict):
    rtol: float = Field(1e-6, gt=0)
    atol: float = Field(1e-8, gt=0)
    r_max_cm: Optional[float] = Field(None, gt=0)
    rabi_half_periods: float = Field(3.0, gt=0)
    oracle_samples: int = Field(2001, ge=2)
    rwa_samples: int = Field(4001, ge=2)
    radius: int = Field(2, ge=0)
    workers: int = Field(1, ge=1)


class SelfIntNumerics(_Strict):
    rtol: float = Field(1e-12, gt=0)
    atol: float = Field(1e-14, gt=0)
    n_periods: int = Field(8, ge=4)
    samples_per_period: int = Field(4096, ge=64)
    pilot_range_cm: Optional[float] = Field(None, gt=0)
    pilot_samples: int = Field(1 << 15, ge=256)
    kmax: int = Field(128, ge=1)
    window_periods: Optional[int] = Field(1, ge=1)
    modes: int = Field(5, ge=1)
    radius: int = Field(2, ge=0)
    degenerate: bool = False
    max_residual_modes: int = Field(10, ge=1)


class SelfIntRwaNumerics(_Strict):
    modes: int = Field(5, ge=1)
    radius: int = Field(2, ge=0)
    degenerate: bool = False
    r_max_cm: float = Field(1e7, gt=0)
    samples: int = Field(2001, ge=2)
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-12, gt=0)


class ModeSpec(_Strict):
    q_cm_inv: float = Field(gt=0)
    C_re_cm_inv: list[list[float]]
    C_im_cm_inv: Optional[list[list[float]]] = None

    def matrix(self) -> np.ndarray:
        return _complex_matrix(self.C_re_cm_inv, self.C_im_cm_inv)


class GenericSystem(_Strict):
    h0_re_cm_inv: list[list[float]]
    h0_im_cm_inv: Optional[list[list[float]]] = None
    modes: list[ModeSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _dims(self):
        n = len(self.h0_re_cm_inv)
        if n < 2:
            raise ValueError("h0 must be at least 2x2")
        shapes = [np.shape(self.h0_re_cm_inv)]
        if self.h0_im_cm_inv is not None:
            shapes.append(np.shape(self.h0_im_cm_inv))
        for m in self.modes:
            shapes.append(np.shape(m.C_re_cm_inv))
            if m.C_im_cm_inv is not None:
                shapes.append(np.shape(m.C_im_cm_inv))
        if any(s != (n, n) for s in shapes):
            raise ValueError(f"inconsistent matrix dimensions {shapes}")
        h = self.h0()
        if np.max(np.abs(h - h.conj().T)) > 1e-12 * max(float(np.max(np.abs(h))), 1e-300):
            raise ValueError("h0 must be Hermitian")
        return self

    def h0(self) -> np.ndarray:
        return _complex_matrix(self.h0_re_cm_inv, self.h0_im_cm_inv)


class GenericRwa(_Strict):
    strategy: Literal["manual", "nearest-resonance", "exhaustive-scan"] = "nearest-resonance"
    radius: int = Field(2, ge=0)
    integers: Optional[list[list[int]]] = None  # [mode][superdiagonal pair]
    degenerate: bool = False


class GenericNumerics(_Strict):
    r_max_cm: float = Field(gt=0)
    samples: int = Field(1001, ge=2)
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-12, gt=0)


def _complex_matrix(re, im) -> np.ndarray:
    a = np.asarray(re, dtype=float)
    if im is not None:
        a = a + 1j * np.asarray(im, dtype=float)
    return a.astype(complex)


# --------------------------------------------------------------------------
# scenarios


class TransparencyConfig(_Strict):
    scenario: Literal["transparency"]
    physics: ThreeFlavourPhysics = ThreeFlavourPhysics()
    numerics: TransparencyNumerics = TransparencyNumerics()
    compare_oracle: bool = True


class TransparencyScanConfig(_Strict):
    scenario: Literal["transparency-scan"]
    physics: ThreeFlavourPhysics = ThreeFlavourPhysics()
    scan: ScanSettings = ScanSettings()
    numerics: ScanNumerics = ScanNumerics()
    compare_oracle: bool = True


class SelfIntConfig(_Strict):
    scenario: Literal["selfint"]
    physics: SelfIntPhysics = SelfIntPhysics()
    numerics: SelfIntNumerics = SelfIntNumerics()


class SelfIntRwaConfig(_Strict):
    scenario: Literal["selfint-rwa"]
    physics: SelfIntPhysics = SelfIntPhysics()
    spectrum_csv: str
    numerics: SelfIntRwaNumerics = SelfIntRwaNumerics()
    compare_oracle: bool = False


class RwaGenericConfig(_Strict):
    scenario: Literal["rwa-generic"]
    system: GenericSystem
    rwa: GenericRwa = GenericRwa()
    numerics: GenericNumerics
    compare_oracle: bool = False


ScenarioConfig = Annotated[
    Union[TransparencyConfig, TransparencyScanConfig, SelfIntConfig, SelfIntRwaConfig, RwaGenericConfig],
    Field(discriminator="scenario"),
]

SCENARIOS = ("transparency", "transparency-scan", "selfint", "selfint-rwa", "rwa-generic")


class _Root(_Strict):
    config: ScenarioConfig


def parse_config(data: dict, scenario: str | None = None):
    """Validate a decoded JSON object. ``scenario`` fills or checks the tag."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    if scenario is not None:
        tag = data.setdefault("scenario", scenario)
        if tag != scenario:
            raise ConfigError(f"config is for scenario {tag!r}, not {scenario!r}")
    try:
        return _Root(config=data).config
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, scenario: str | None = None):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    cfg = parse_config(data, scenario)
    # data files named in a config are relative to the config itself
    ref = getattr(cfg, "spectrum_csv", None)
    if ref is not None and not Path(ref).is_absolute():
        cfg = cfg.model_copy(update={"spectrum_csv": str(p.parent / ref)})
    return cfg


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")
