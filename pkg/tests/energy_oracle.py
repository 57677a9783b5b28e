"""
Independent straight-line transcription of the per-frame energy equations,
used only to cross-check app.energy_model. Plain floats, no app imports.
"""


def oracle_frame_energy(
    width, height, is_key,
    sensor_mp, clock_hz, t_exp, p_sensor_idle, sensor_slope, sensor_offset,
    p_isp_active, p_isp_idle, isp_slope, isp_offset,
    p_host_active, p_host_idle, app_key_per_mp, app_flow_per_mp,
    k_comm,
):
    """Returns (sensor, isp, host, comm, total) in mJ."""
    pixels = width * height
    mp = pixels / 1e6

    p_sensor_active = sensor_slope * sensor_mp + sensor_offset
    t_active = pixels / clock_hz
    e_sensor = p_sensor_active * t_active + p_sensor_idle * t_exp

    t_isp = isp_slope * mp + isp_offset
    if is_key:
        t_app = app_key_per_mp * mp
    else:
        t_app = app_flow_per_mp * mp

    e_isp = p_isp_active * t_isp + p_isp_idle * (t_exp + t_active + t_app)
    e_host = p_host_active * t_app + p_host_idle * (t_exp + t_active + t_isp)
    e_comm = k_comm * mp
    return e_sensor, e_isp, e_host, e_comm, e_sensor + e_isp + e_host + e_comm


IMX219_PI3 = dict(
    sensor_mp=8.08192, clock_hz=12e6, t_exp=0.02, p_sensor_idle=141.8,
    sensor_slope=8.27, sensor_offset=130.394,
    p_isp_active=1000.0, p_isp_idle=100.0, isp_slope=0.095, isp_offset=0.032,
    p_host_active=3000.0, p_host_idle=300.0, app_key_per_mp=0.5, app_flow_per_mp=0.12,
    k_comm=10.0,
)
