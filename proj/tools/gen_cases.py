#!/usr/bin/env python3
"""Regenerate the shipped case files in cases/.

usage: gen_cases.py [OUTDIR]
"""

import json
import math
import random
import sys
from pathlib import Path

FEEDER_SIGMA = [
    [2.98, 0, 0, 0, 0, 0],
    [0, 7.52, 0, 0, 0, 0],
    [0, 2.25, 3.91, 0, 0, 0],
    [0, 0, 0, 1.42, 0, 0],
    [0, 0, 0, 0, 3.75, 0],
    [0, 0, 0, 0, 1.46, 2.35],
]


def load_shape(steps, dt):
    out = []
    for k in range(steps):
        h = (k + 0.5) * dt
        morning = math.exp(-((h - 9.0) / 2.5) ** 2)
        evening = math.exp(-((h - 19.0) / 2.5) ** 2)
        out.append(round(0.55 + 0.25 * morning + 0.4 * evening, 6))
    return out


def wind_shape(steps, dt, phase):
    return [round(0.5 + 0.25 * math.cos(2 * math.pi * ((k + 0.5) * dt - phase) / 24.0), 6) for k in range(steps)]


def pv_shape(steps, dt):
    out = []
    for k in range(steps):
        h = (k + 0.5) * dt
        out.append(round(max(0.0, math.sin(math.pi * (h - 6.0) / 12.0)) if 6.0 < h < 18.0 else 0.0, 6))
    return out


def source_profiles(sources, steps, dt, level):
    cols = []
    for i, s in enumerate(sources):
        shape = wind_shape(steps, dt, 3.0 + 2.0 * i) if s["kind"] == "wind" else pv_shape(steps, dt)
        cols.append([round(level[s["kind"]] * s["capacity"] * v, 6) for v in shape])
    return [[cols[j][k] for j in range(len(sources))] for k in range(steps)]


def tou_config(**extra):
    cfg = {"tou_price": {"peak": 1.0, "offpeak": 0.5, "peak_start_hour": 8, "peak_end_hour": 20},
           "price_scale": 10.0, "r_v": 1.0, "r_e": 0.1, "gamma": 0.95, "kappa_rule": "dr",
           "window_hours": 4, "polygon_sides": 12, "mpc_window_hours": 4}
    cfg.update(extra)
    return cfg


def case3():
    steps, dt = 96, 0.25
    buses = [{"id": 0}, {"id": 1, "p_load": 0.3, "q_load": 0.1}, {"id": 2, "p_load": 0.4, "q_load": 0.15}]
    for b in buses:
        b.update({"v_min": 0.9025, "v_max": 1.1025})
    branches = [{"from": 0, "to": 1, "r": 0.02, "x": 0.04, "l_max": 4.0},
                {"from": 1, "to": 2, "r": 0.03, "x": 0.05, "l_max": 4.0}]
    sources = [{"bus": 1, "kind": "wind", "capacity": 1.0}, {"bus": 2, "kind": "wind", "capacity": 1.0}]
    units = [{"bus": 2, "p_min": -0.3, "p_max": 0.3, "e_min": -0.6, "e_max": 0.6, "e0": 0.0,
              "alpha": 0.01, "beta": 0.95}]
    return {
        "name": "case3",
        "synthetic": True,
        "base": {"mva": 10.0, "kv": 10.0},
        "root": 0,
        "buses": buses,
        "branches": branches,
        "ders": {"sources": sources, "energy_units": units},
        "profiles": {"steps": steps, "dt_hours": dt, "start_hour": 0, "load_shape": load_shape(steps, dt),
                     "p_pred": source_profiles(sources, steps, dt, {"wind": 0.4, "pv": 0.5})},
        "disturbance": {"family": "ou", "tau_hours": 1.0, "sigma_scale": 0.05,
                        "sigma": [[1.0, 0.0], [0.5, math.sqrt(0.75)]]},
        "config": tou_config(),
    }


# Baran and Wu 33-bus feeder: (from, to, r ohm, x ohm), loads (kW, kvar) at the receiving bus.
BW33 = [
    (1, 2, 0.0922, 0.0470, 100, 60), (2, 3, 0.4930, 0.2511, 90, 40), (3, 4, 0.3660, 0.1864, 120, 80),
    (4, 5, 0.3811, 0.1941, 60, 30), (5, 6, 0.8190, 0.7070, 60, 20), (6, 7, 0.1872, 0.6188, 200, 100),
    (7, 8, 0.7114, 0.2351, 200, 100), (8, 9, 1.0300, 0.7400, 60, 20), (9, 10, 1.0440, 0.7400, 60, 20),
    (10, 11, 0.1966, 0.0650, 45, 30), (11, 12, 0.3744, 0.1238, 60, 35), (12, 13, 1.4680, 1.1550, 60, 35),
    (13, 14, 0.5416, 0.7129, 120, 80), (14, 15, 0.5910, 0.5260, 60, 10), (15, 16, 0.7463, 0.5450, 60, 20),
    (16, 17, 1.2890, 1.7210, 60, 20), (17, 18, 0.7320, 0.5740, 90, 40), (2, 19, 0.1640, 0.1565, 90, 40),
    (19, 20, 1.5042, 1.3554, 90, 40), (20, 21, 0.4095, 0.4784, 90, 40), (21, 22, 0.7089, 0.9373, 90, 40),
    (3, 23, 0.4512, 0.3083, 90, 50), (23, 24, 0.8980, 0.7091, 420, 200), (24, 25, 0.8960, 0.7011, 420, 200),
    (6, 26, 0.2030, 0.1034, 60, 25), (26, 27, 0.2842, 0.1447, 60, 25), (27, 28, 1.0590, 0.9337, 60, 20),
    (28, 29, 0.8042, 0.7006, 120, 70), (29, 30, 0.5075, 0.2585, 200, 600), (30, 31, 0.9744, 0.9630, 150, 70),
    (31, 32, 0.3105, 0.3619, 210, 100), (32, 33, 0.3410, 0.5302, 60, 40),
]


def case33():
    steps, dt = 96, 0.25
    buses = [{"id": 0, "v_min": 0.81, "v_max": 1.21}]
    branches = []
    for f, t, r, x, p, q in BW33:
        buses.append({"id": t - 1, "p_load_kw": p, "q_load_kvar": q, "v_min": 0.81, "v_max": 1.21})
        branches.append({"from": f - 1, "to": t - 1, "r_ohm": r, "x_ohm": x, "l_max": 2.0})
    sources = [{"bus": 17, "kind": "wind", "capacity": 0.2}, {"bus": 24, "kind": "pv", "capacity": 0.15},
               {"bus": 32, "kind": "wind", "capacity": 0.2}, {"bus": 21, "kind": "pv", "capacity": 0.1}]
    units = [{"bus": 17, "p_min": -0.05, "p_max": 0.05, "e_min": -0.1, "e_max": 0.1, "e0": 0.0,
              "alpha": 0.01, "beta": 0.95}]
    return {
        "name": "case33",
        "synthetic": True,
        "note": "Baran-Wu 33-bus impedances and loads; DER placements, profiles and disturbance are synthetic.",
        "base": {"mva": 10.0, "kv": 12.66},
        "root": 0,
        "buses": buses,
        "branches": branches,
        "ders": {"sources": sources, "energy_units": units},
        "profiles": {"steps": steps, "dt_hours": dt, "start_hour": 0, "load_shape": load_shape(steps, dt),
                     "p_pred": source_profiles(sources, steps, dt, {"wind": 0.4, "pv": 0.6})},
        "disturbance": {"family": "ou", "tau_hours": 1.0, "sigma_scale": 0.01,
                        "sigma": [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0.5, 0, math.sqrt(0.75), 0], [0, 0.5, 0, math.sqrt(0.75)]]},
        "config": tou_config(),
    }


def case123():
    steps, dt = 24, 1.0
    rng = random.Random(123)
    n = 123
    parent = [-1] + [rng.randint(max(0, i - 10), i - 1) for i in range(1, n)]
    buses = []
    for i in range(n):
        b = {"id": i, "v_min": 0.9025, "v_max": 1.1025}
        if i > 0 and rng.random() < 0.7:
            p = rng.choice([20, 20, 40, 40, 40, 75])
            b["p_load_kw"] = p
            b["q_load_kvar"] = round(p * rng.uniform(0.4, 0.55), 1)
        buses.append(b)
    branches = []
    for i in range(1, n):
        r = round(rng.uniform(0.01, 0.03), 4)
        branches.append({"from": parent[i], "to": i, "r_ohm": r, "x_ohm": round(r * rng.uniform(1.2, 2.0), 4),
                         "l_max": 16.0})
    sources = [{"bus": 11, "kind": "wind", "capacity": 2.0}, {"bus": 62, "kind": "wind", "capacity": 2.0},
               {"bus": 66, "kind": "wind", "capacity": 2.0}, {"bus": 72, "kind": "pv", "capacity": 1.0},
               {"bus": 75, "kind": "pv", "capacity": 1.0}, {"bus": 114, "kind": "pv", "capacity": 1.0}]
    units = [{"bus": 62, "p_min": -0.5, "p_max": 0.5, "e_min": -1.0, "e_max": 1.0, "e0": 0.0,
              "alpha": 0.01, "beta": 0.95}]
    return {
        "name": "case123",
        "synthetic": True,
        "note": "Synthetic 123-bus radial analog: topology, impedances and loads are generated. DERs: wind 20 MVA at "
                "11, 62, 66; PV 10 MVA at 72, 75, 114; 5 MW x 4 h unit at 62.",
        "base": {"mva": 10.0, "kv": 10.0},
        "root": 0,
        "buses": buses,
        "branches": branches,
        "ders": {"sources": sources, "energy_units": units},
        "profiles": {"steps": steps, "dt_hours": dt, "start_hour": 0, "load_shape": load_shape(steps, dt),
                     "p_pred": source_profiles(sources, steps, dt, {"wind": 0.15, "pv": 0.3})},
        "disturbance": {"family": "ou", "tau_hours": 1.0, "sigma_scale": 0.02, "sigma": FEEDER_SIGMA},
        "config": tou_config(),
    }


def main(outdir):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for make in (case3, case33, case123):
        case = make()
        (out / f"{case['name']}.json").write_text(json.dumps(case, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "cases")
