"""Named study configurations."""

from __future__ import annotations

from dataclasses import dataclass

from ..em import EMConfig
from ..hazards import Exponential, HazardModel, Weibull
from ..records import MASS_ACTION, NETWORK
from ..simulate import SimulationConfig
from .households import NaturalHistory


@dataclass(frozen=True)
class Preset:
    name: str
    mode: str
    contact_model: HazardModel
    tol: float

    def config(self, full_scale: bool = False, seed: int = 0) -> SimulationConfig:
        n, m = (100_000, 1_000) if full_scale else (10_000, 300)
        return SimulationConfig(mode=self.mode, n=n, stop_m=m, contact_model=self.contact_model,
                                seed=seed)

    def em_config(self) -> EMConfig:
        return EMConfig(tol=self.tol)

    @staticmethod
    def replicates(full_scale: bool = False) -> int:
        return 1_000 if full_scale else 200


NETWORK_TOL = 5e-4
MASS_ACTION_TOL = 5e-3

PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("table1-w05", NETWORK, Weibull(0.5, 1.0), NETWORK_TOL),
    Preset("table1-exp", NETWORK, Exponential(1.0), NETWORK_TOL),
    Preset("table1-w2", NETWORK, Weibull(2.0, 1.0), NETWORK_TOL),
    # R0 = 2 under mass action needs rate 2 for the exponential cell
    Preset("table2-w05", MASS_ACTION, Weibull(0.5, 5.0), MASS_ACTION_TOL),
    Preset("table2-exp", MASS_ACTION, Exponential(2.0), MASS_ACTION_TOL),
    Preset("table2-w2", MASS_ACTION, Weibull(2.0, 1.0), MASS_ACTION_TOL),
]}

PRIMARY_HISTORY = NaturalHistory(incubation=2, latent=0, infectious=6)

NATURAL_HISTORY_GRID: dict[str, NaturalHistory] = {
    "primary": PRIMARY_HISTORY,
    "incubation-1": NaturalHistory(1, 0, 6),
    "incubation-3": NaturalHistory(3, 0, 6),
    "latent-1": NaturalHistory(2, 1, 6),
    "infectious-5": NaturalHistory(2, 0, 5),
    "infectious-7": NaturalHistory(2, 0, 7),
    "joint-low": NaturalHistory(1, 0, 5),
    "joint-high": NaturalHistory(3, 1, 7),
}
