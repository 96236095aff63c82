#!/usr/bin/env python3
"""Write the IEEE 33-bus feeder (Baran & Wu 1989 data) as gridloop network JSON.

Bus k of the published table becomes node k-1, so the substation is node 0.
Impedances are converted from ohms on a 12.66 kV base; loads from kW/kvar.
Each DER box allows curtailment from nominal load down to zero.
"""
import argparse
import json

BRANCHES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]

LOADS_KW_KVAR = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30),
    12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20),
    17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40),
    22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25),
    27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600), 31: (150, 70),
    32: (210, 100), 33: (60, 40),
}


def build(s_base_mva, v_base_kv=12.66):
    z_base = v_base_kv ** 2 / s_base_mva
    nodes = []
    for bus in range(2, 34):
        p_kw, q_kvar = LOADS_KW_KVAR[bus]
        p0 = -p_kw / 1000.0 / s_base_mva
        q0 = -q_kvar / 1000.0 / s_base_mva
        nodes.append({"id": bus - 1, "p0": p0, "q0": q0, "shunt_g": 0.0, "shunt_b": 0.0,
                      "pmin": p0, "pmax": 0.0, "qmin": q0, "qmax": 0.0, "smax": None})
    lines = [{"from": f - 1, "to": t - 1, "r": r / z_base, "x": x / z_base}
             for f, t, r, x in BRANCHES]
    return {"v0": 1.0, "nodes": nodes, "lines": lines}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--s-base-mva", type=float, default=100.0)
    ap.add_argument("out")
    args = ap.parse_args()
    with open(args.out, "w") as fh:
        json.dump(build(args.s_base_mva), fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
