"""
Per-frame energy model of the imaging pipeline: sensor, ISP, host processor
and sensor-to-host interface.

Units are fixed: milliwatts, seconds, millijoules; megapixels are 10^6 pixels.
Every function is pure over immutable parameter models.
"""
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Union

from . import config
from .models import (
    ACTIONS,
    Action,
    CommParams,
    FrameSpec,
    HardwarePreset,
    HostParams,
    IspParams,
    SensorParams,
    read_json_model,
)

logger = logging.getLogger(__name__)


class EnergyModelError(Exception):
    """Custom exception for energy model domain violations."""
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-frame energy terms in mJ. `total_mj` is always the sum of the four components."""
    sensor_mj: float
    isp_mj: float
    host_mj: float
    comm_mj: float

    @property
    def total_mj(self) -> float:
        return self.sensor_mj + self.isp_mj + self.host_mj + self.comm_mj

    @classmethod
    def zero(cls) -> "EnergyBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0)

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        if not isinstance(other, EnergyBreakdown):
            return NotImplemented
        return EnergyBreakdown(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> Dict[str, float]:
        return {
            "sensor_mj": self.sensor_mj,
            "isp_mj": self.isp_mj,
            "host_mj": self.host_mj,
            "comm_mj": self.comm_mj,
            "total_mj": self.total_mj,
        }


def load_preset(path: Union[str, Path] = config.DEFAULT_PRESET_PATH) -> HardwarePreset:
    """Loads a hardware preset JSON (keys mirror the parameter field names)."""
    preset = read_json_model(path, HardwarePreset)
    logger.info(f"Loaded hardware preset '{preset.name}' from {path}")
    return preset


def sensing_time_s(sensor: SensorParams, frame: FrameSpec) -> float:
    """R_frame / f: one pixel per clock period."""
    return frame.pixels / sensor.clock_hz


def isp_time_s(isp: IspParams, frame: FrameSpec) -> float:
    """T_ISP, linear in frame megapixels."""
    return isp.isp_time_slope_s_per_mp * frame.resolution_mp + isp.isp_time_offset_s


def app_time_s(host: HostParams, frame: FrameSpec, is_key: bool) -> float:
    """T_app: full analysis on key frames, flow-compensated analysis otherwise."""
    per_mp = host.app_time_key_s_per_mp if is_key else host.app_time_flow_s_per_mp
    return per_mp * frame.resolution_mp


def sensor_energy(p: SensorParams, frame: FrameSpec) -> float:
    """E_sensor = P_active * T_active + P_idle * T_exp. Standby power is not modelled."""
    if frame.resolution_mp > p.sensor_resolution_mp:
        raise EnergyModelError(
            f"Frame {frame.width_px}x{frame.height_px} ({frame.resolution_mp:.6f} MP) exceeds "
            f"sensor resolution ({p.sensor_resolution_mp:.6f} MP)"
        )
    return p.active_power_mw * sensing_time_s(p, frame) + p.idle_power_mw * p.exposure_s


def isp_energy(p: IspParams, frame: FrameSpec, sensor: SensorParams, t_app_s: float) -> float:
    """E_ISP = P_active * T_ISP + P_idle * (T_exp + R_frame/f + T_app)."""
    if t_app_s < 0:
        raise EnergyModelError(f"t_app_s must be non-negative, got {t_app_s}")
    idle_s = sensor.exposure_s + sensing_time_s(sensor, frame) + t_app_s
    return p.active_power_mw * isp_time_s(p, frame) + p.idle_power_mw * idle_s


def host_energy(p: HostParams, frame: FrameSpec, sensor: SensorParams, isp: IspParams, is_key: bool) -> float:
    """E_host = P_active * T_app + P_idle * (T_exp + R_frame/f + T_ISP)."""
    idle_s = sensor.exposure_s + sensing_time_s(sensor, frame) + isp_time_s(isp, frame)
    return p.active_power_mw * app_time_s(p, frame, is_key) + p.idle_power_mw * idle_s


def comm_energy(p: CommParams, frame: FrameSpec) -> float:
    """E_comm = k * R_frame."""
    return p.mj_per_mp * frame.resolution_mp


def frame_energy(preset: HardwarePreset, frame: FrameSpec, is_key: bool) -> EnergyBreakdown:
    """
    Full per-frame breakdown. T_app is computed once and shared by the host
    and ISP terms.

    Raises:
        EnergyModelError: If the frame exceeds the sensor resolution.
    """
    t_app = app_time_s(preset.host, frame, is_key)
    return EnergyBreakdown(
        sensor_mj=sensor_energy(preset.sensor, frame),
        isp_mj=isp_energy(preset.isp, frame, preset.sensor, t_app),
        host_mj=host_energy(preset.host, frame, preset.sensor, preset.isp, is_key),
        comm_mj=comm_energy(preset.comm, frame),
    )


def action_frame(base_frame: FrameSpec, action: Action) -> FrameSpec:
    return base_frame.downsampled(action.linear_downsample)


def action_energy_table(preset: HardwarePreset, base_frame: FrameSpec) -> Dict[Action, EnergyBreakdown]:
    """Energy of each action on `base_frame`; a^1 is processed as a key frame, the rest via flow."""
    table = {a: frame_energy(preset, action_frame(base_frame, a), a.is_key) for a in ACTIONS}
    for a, e in table.items():
        logger.debug(f"{preset.name} {a.label}: {e.total_mj:.4f} mJ")
    return table


def policy_overhead(preset: HardwarePreset, overhead_s: float) -> EnergyBreakdown:
    """Policy-network inference charged as host active time."""
    if overhead_s < 0:
        raise EnergyModelError(f"overhead_s must be non-negative, got {overhead_s}")
    return EnergyBreakdown(0.0, 0.0, preset.host.active_power_mw * overhead_s, 0.0)
