#!/usr/bin/env python3
"""Generate a deterministic stand-in for the auto insurance claim data.

The real data is a 28-column policy table (identifiers, claim history,
driver and vehicle attributes) with a zero-inflated continuous claim
amount. This script fabricates a small table with the same column names,
types and level sets, a sparse planted signal on MVR_PTS, REVOLKED and
AREA, and a compound Poisson-gamma response, so the analysis pipeline can
be exercised end to end without redistributing the original records.

Row 0 carries every factor's baseline level, which pins the drop-first
encoding to the conventional reference categories regardless of the
random draws behind it. A few numeric and factor cells are blanked on a
fixed index pattern to exercise imputation.

Rerunning with the same seed reproduces the CSV byte for byte.
"""

import argparse
import csv
import datetime
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from glmci.simbench import sample_tweedie  # noqa: E402

COLUMNS = [
    "POLICYNO", "PLCYDATE", "CLM_FREQ5", "CLM_AMT", "RETAINED", "CLM_FLAG",
    "CLM_AMT5", "KIDSDRIV", "TRAVTIME", "BLUEBOOK", "NPOLICY", "MVR_PTS",
    "AGE", "HOMEKIDS", "YOJ", "INCOME", "HOME_VAL", "SAMEHOME", "CAR_USE",
    "CAR_TYPE", "RED_CAR", "REVOLKED", "GENDER", "MARRIED", "PARENT1",
    "JOBCLASS", "MAX_EDUC", "AREA",
]

CAR_TYPES = ["Panel Truck", "Pickup", "Sedan", "Sports Car", "SUV", "Van"]
JOBCLASSES = [
    "Unknown", "Blue Collar", "Clerical", "Doctor", "Home Maker", "Lawyer",
    "Manager", "Professional", "Student",
]
EDUC = ["<High School", "Bachelors", "High School", "Masters", "PhD"]

BASELINE = {
    "CAR_USE": "Private",
    "CAR_TYPE": "Panel Truck",
    "RED_CAR": "no",
    "REVOLKED": "No",
    "GENDER": "F",
    "MARRIED": "No",
    "PARENT1": "No",
    "JOBCLASS": "Unknown",
    "MAX_EDUC": "<High School",
    "AREA": "Rural",
}


def generate(n_rows: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = n_rows
    rows = []

    kidsdriv = rng.binomial(3, 0.08, n)
    travtime = np.round(rng.gamma(7.0, 5.0, n)).astype(int) + 1
    bluebook = np.round(rng.gamma(4.0, 3500.0, n)).astype(int) + 1500
    retained = rng.poisson(5.0, n) + 1
    npolicy = rng.poisson(0.6, n) + 1
    mvr_pts = rng.poisson(1.7, n)
    age = np.clip(np.round(rng.normal(45.0, 10.0, n)), 16, 81).astype(int)
    homekids = rng.poisson(0.9, n)
    yoj = np.round(rng.gamma(9.0, 1.2, n)).astype(int)
    income = np.round(rng.gamma(3.0, 20000.0, n)).astype(int)
    home_val = np.where(
        rng.random(n) < 0.2, 0, np.round(rng.gamma(4.0, 40000.0, n)).astype(int)
    )
    samehome = rng.poisson(8.0, n) + 1

    car_use = rng.choice(["Private", "Commercial"], n, p=[0.63, 0.37])
    car_type = rng.choice(CAR_TYPES, n, p=[0.07, 0.17, 0.30, 0.10, 0.22, 0.14])
    red_car = rng.choice(["no", "yes"], n, p=[0.71, 0.29])
    revolked = rng.choice(["No", "Yes"], n, p=[0.88, 0.12])
    gender = rng.choice(["F", "M"], n, p=[0.54, 0.46])
    married = rng.choice(["No", "Yes"], n, p=[0.40, 0.60])
    parent1 = rng.choice(["No", "Yes"], n, p=[0.87, 0.13])
    jobclass = rng.choice(
        JOBCLASSES, n, p=[0.18, 0.17, 0.12, 0.04, 0.12, 0.08, 0.10, 0.11, 0.08]
    )
    max_educ = rng.choice(EDUC, n, p=[0.14, 0.27, 0.28, 0.20, 0.11])
    area = rng.choice(["Rural", "Urban"], n, p=[0.40, 0.60])

    # row 0 pins every baseline level and a typical numeric profile
    for arr, v in [
        (kidsdriv, 0), (travtime, 33), (bluebook, 14000), (retained, 5),
        (npolicy, 1), (mvr_pts, 1), (age, 45), (homekids, 1), (yoj, 11),
        (income, 60000), (home_val, 160000), (samehome, 8),
    ]:
        arr[0] = v
    for name, arr in [
        ("CAR_USE", car_use), ("CAR_TYPE", car_type), ("RED_CAR", red_car),
        ("REVOLKED", revolked), ("GENDER", gender), ("MARRIED", married),
        ("PARENT1", parent1), ("JOBCLASS", jobclass), ("MAX_EDUC", max_educ),
        ("AREA", area),
    ]:
        arr[0] = BASELINE[name]

    # sparse planted effects; response is claim amount in thousands
    eta = (
        -0.3
        + 0.18 * mvr_pts
        + 1.5 * (revolked == "Yes")
        + 1.1 * (area == "Urban")
        + 0.25 * (car_type == "Sports Car")
        - 0.10 * (car_type == "Sedan")
    )
    amount_k = sample_tweedie(rng, np.exp(eta), power_p=1.5, phi=3.0)
    clm_amt5 = np.round(1000.0 * amount_k).astype(int)
    clm_freq5 = rng.poisson(0.4, n) + (clm_amt5 > 0)
    clm_amt = np.round(clm_amt5 * rng.uniform(0.0, 0.35, n)).astype(int)

    start = datetime.date(1995, 1, 1)
    for i in range(n):
        rows.append({
            "POLICYNO": f"P{100000 + i}",
            "PLCYDATE": (start + datetime.timedelta(days=int(7 * i))).isoformat(),
            "CLM_FREQ5": int(clm_freq5[i]),
            "CLM_AMT": int(clm_amt[i]),
            "RETAINED": int(retained[i]),
            "CLM_FLAG": "Yes" if clm_amt5[i] > 0 else "No",
            "CLM_AMT5": int(clm_amt5[i]),
            "KIDSDRIV": int(kidsdriv[i]),
            "TRAVTIME": int(travtime[i]),
            "BLUEBOOK": int(bluebook[i]),
            "NPOLICY": int(npolicy[i]),
            "MVR_PTS": int(mvr_pts[i]),
            "AGE": int(age[i]),
            "HOMEKIDS": int(homekids[i]),
            "YOJ": int(yoj[i]),
            "INCOME": int(income[i]),
            "HOME_VAL": int(home_val[i]),
            "SAMEHOME": int(samehome[i]),
            "CAR_USE": car_use[i],
            "CAR_TYPE": car_type[i],
            "RED_CAR": red_car[i],
            "REVOLKED": revolked[i],
            "GENDER": gender[i],
            "MARRIED": married[i],
            "PARENT1": parent1[i],
            "JOBCLASS": jobclass[i],
            "MAX_EDUC": max_educ[i],
            "AREA": area[i],
        })

    # fixed-pattern missingness, never in the baseline row
    for i in range(1, n):
        if i % 29 == 7:
            rows[i]["YOJ"] = "NA"
        if i % 37 == 11:
            rows[i]["INCOME"] = "?"
        if i % 41 == 13:
            rows[i]["JOBCLASS"] = ""
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20)
    ap.add_argument("--out", default=os.path.join("data", "autoclaim_standin.csv"))
    args = ap.parse_args(argv)

    rows = generate(args.rows, args.seed)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in COLUMNS])
    zero_share = sum(1 for r in rows if r["CLM_AMT5"] == 0) / len(rows)
    print(f"wrote {args.out}: {len(rows)} rows, zero-claim share {zero_share:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
