"""
Episode traces: per-frame records of action, accuracy, energy and reward,
plus CSV export.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

from . import config
from .energy_model import EnergyBreakdown
from .models import Action

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameRecord:
    t: int
    action: Action
    accuracy: float
    energy: EnergyBreakdown
    reward: float
    extra_energy: EnergyBreakdown = EnergyBreakdown.zero()

    @property
    def charged(self) -> EnergyBreakdown:
        """What the frame actually cost: the action's energy plus probing/inference overhead."""
        return self.energy + self.extra_energy


@dataclass
class EpisodeTrace:
    seed: int
    policy_id: str
    lambda_: float
    records: List[FrameRecord] = field(default_factory=list)
    params: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def rewards(self) -> List[float]:
        return [r.reward for r in self.records]

    @property
    def charged_totals(self) -> List[float]:
        return [r.charged.total_mj for r in self.records]

    @property
    def total_energy_mj(self) -> float:
        return sum(self.charged_totals)

    @property
    def mean_accuracy(self) -> float:
        return sum(r.accuracy for r in self.records) / len(self.records)

    @property
    def key_frames(self) -> int:
        return sum(1 for r in self.records if r.action.is_key)

    @property
    def overhead_mj(self) -> float:
        return sum(r.extra_energy.total_mj for r in self.records)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(trace: EpisodeTrace, path: Union[str, Path]) -> Path:
    """
    Writes one row per frame. Component columns hold the charged energy, so
    probe rounds and policy inference are included where they were spent.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(config.TRACE_COLUMNS)
        for r in trace.records:
            e = r.charged
            writer.writerow([
                r.t, r.action.label, _fmt(r.accuracy),
                _fmt(e.sensor_mj), _fmt(e.isp_mj), _fmt(e.host_mj), _fmt(e.comm_mj), _fmt(e.total_mj),
                _fmt(r.reward),
            ])
    logger.info(f"Wrote {len(trace)}-frame trace for {trace.policy_id} to {path}")
    return path
