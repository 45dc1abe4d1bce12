"""Crossbar, ADC and DAC energy from OU activation counts."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .core import HardwareConfig, PatternMapError
from .simulator import CycleStats


@dataclass(frozen=True)
class EnergyStats:
    e_crossbar_pj: float
    e_adc_pj_total: float
    e_dac_pj_total: float
    e_total_pj: float
    normalized_vs_baseline: float | None = None

    @classmethod
    def from_components(cls, crossbar: float, adc: float, dac: float) -> "EnergyStats":
        return cls(crossbar, adc, dac, crossbar + adc + dac)

    @property
    def adc_share(self) -> float:
        return self.e_adc_pj_total / self.e_total_pj if self.e_total_pj else 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def energy_of(stats: CycleStats, hw: HardwareConfig) -> EnergyStats:
    """Skipped activations cost nothing.

    In ``flat`` mode every OU activation is charged the full per-OU energy;
    ``linear`` scales it by the fraction of OU cells actually activated.
    """
    if hw.ou_energy == "linear":
        crossbar = stats.activated_cells / (hw.ou_rows * hw.ou_cols) * hw.e_ou_pj
    else:
        crossbar = stats.ou_activations * hw.e_ou_pj
    return EnergyStats.from_components(
        crossbar, stats.adc_conversions * hw.e_adc_pj, stats.dac_conversions * hw.e_dac_pj
    )


def compare(pattern: EnergyStats, baseline: EnergyStats) -> dict:
    if baseline.e_total_pj <= 0:
        raise PatternMapError("baseline energy is zero; nothing to normalize against")
    normalized = pattern.e_total_pj / baseline.e_total_pj
    return {
        "normalized_energy": normalized,
        "energy_efficiency": 1.0 / normalized if normalized else float("inf"),
    }
