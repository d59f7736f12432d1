#!/usr/bin/env python3
"""Write a PYPOWER bundled case in the native JSON case format.

usage: pypower_to_native.py case39 data/case39.json
"""
import json
import sys

import numpy as np

np.int = int  # old PYPOWER releases use removed numpy aliases
np.float = float

import importlib

TYPES = {1: "PQ", 2: "PV", 3: "Slack"}


def main(name, out):
    ppc = getattr(importlib.import_module("pypower." + name), name)()
    doc = {
        "name": name,
        "base_MVA": float(ppc["baseMVA"]),
        "buses": [
            {
                "id": int(r[0]), "bus_type": TYPES[int(r[1])], "Pd": float(r[2]), "Qd": float(r[3]),
                "Gs": float(r[4]), "Bs": float(r[5]), "Vm": float(r[7]), "Va": float(r[8]),
                "base_kV": float(r[9]),
            }
            for r in ppc["bus"]
        ],
        "branches": [
            {
                "from": int(r[0]), "to": int(r[1]), "r": float(r[2]), "x": float(r[3]), "b": float(r[4]),
                "tap": float(r[8]), "shift": float(r[9]), "status": bool(r[10] > 0),
            }
            for r in ppc["branch"]
        ],
        "gens": [
            {"bus": int(r[0]), "Pg": float(r[1]), "Qg": float(r[2]), "Vg": float(r[5]), "status": bool(r[7] > 0)}
            for r in ppc["gen"]
        ],
    }
    with open(out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
