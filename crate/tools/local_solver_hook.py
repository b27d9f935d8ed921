#!/usr/bin/env python3
"""Local AC OPF solver used as the upper-bound hook.

Usage:
    local_solver_hook.py CASE.m [--warmstart WARM.csv] [--out RESULT.json]

Runs the PYPOWER interior point OPF on a MATPOWER case and writes a JSON
document with the objective and the operating point. A warm-start CSV as
written by `opfrelax solve --warmstart` seeds the voltages and dispatch.
"""

import argparse
import csv
import json
import re
import sys

import numpy as np
from pypower.api import ppoption, runopf

MATRIX = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
SCALAR = re.compile(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;")


def load_case(path):
    text = open(path).read()
    text = "\n".join(line.split("%", 1)[0] for line in text.splitlines())
    ppc = {"version": "2", "baseMVA": float(SCALAR.search(text).group(1))}
    for name, body in MATRIX.findall(text):
        if name not in ("bus", "gen", "branch", "gencost"):
            continue
        rows = []
        for row in re.split(r"[;\n]", body):
            vals = row.replace(",", " ").split()
            if vals:
                rows.append([float(v) for v in vals])
        ppc[name] = np.array(rows)
    br = ppc["branch"]
    if br.shape[1] < 13:
        pad = np.tile([-360.0, 360.0], (br.shape[0], 1))[:, br.shape[1] - 11:]
        ppc["branch"] = np.hstack([br, pad])
    # PYPOWER mis-shapes its constraint vector when no branch carries a
    # flow limit; an inactive limit far above any flow sidesteps that.
    unlimited = ppc["branch"][:, 5] == 0
    ppc["branch"][unlimited, 5] = 1e5
    return ppc


def apply_warmstart(ppc, path):
    bus_pos = {int(b): k for k, b in enumerate(ppc["bus"][:, 0])}
    with open(path) as f:
        for rec in csv.DictReader(f):
            if rec["kind"] == "bus":
                k = bus_pos[int(rec["id"])]
                ppc["bus"][k, 7] = float(rec["a"])
                ppc["bus"][k, 8] = float(rec["b"])
            elif rec["kind"] == "gen":
                k = int(rec["id"])
                ppc["gen"][k, 1] = float(rec["a"])
                ppc["gen"][k, 2] = float(rec["b"])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("case")
    ap.add_argument("--warmstart")
    ap.add_argument("--out")
    args = ap.parse_args()

    ppc = load_case(args.case)
    if args.warmstart:
        apply_warmstart(ppc, args.warmstart)
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PDIPM_FEASTOL=1e-8, PDIPM_GRADTOL=1e-8,
                   PDIPM_COMPTOL=1e-8, PDIPM_COSTTOL=1e-10)
    r = runopf(ppc, opt)
    doc = {
        "case": args.case.rsplit("/", 1)[-1].rsplit(".", 1)[0],
        "success": bool(r["success"]),
        "objective": float(r["f"]),
        "bus": [
            {"id": int(b[0]), "vm": float(b[7]), "va_deg": float(b[8])}
            for b in r["bus"]
        ],
        "gen": [
            {"index": k, "bus": int(g[0]), "pg_mw": float(g[1]), "qg_mvar": float(g[2])}
            for k, g in enumerate(r["gen"])
        ],
    }
    out = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w") as f:
            f.write(out + "\n")
    else:
        print(out)
    return 0 if doc["success"] else 1


if __name__ == "__main__":
    sys.exit(main())
