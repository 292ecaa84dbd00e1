"""From a raw multichannel recording to a colour-coded clustering.

A synthetic four-channel log stands in for a vehicle recording: a slowly
varying speed, its acceleration, a brake signal and a steering angle, with
calm and busy stretches.  It is written as CSV, cut into differenced windows
with the same command-line tool a real recording would go through, clustered
with the route preset, and the allocation weights are embedded in 3-D and
mapped to RGB.
"""

import os
import tempfile

import numpy as np

from mdra.cli import main

rng = np.random.default_rng(3)
T = 1600
t = np.arange(T) * 0.1
busy = (np.sin(t / 15.0) > 0).astype(float)
accel = 0.05 * rng.normal(size=T) + busy * 0.8 * np.sin(t * 1.7)
speed = 10 + np.cumsum(accel) * 0.1
brake = np.clip(-accel, 0, None)
steer = busy * 0.3 * np.sin(t * 0.9) + 0.01 * rng.normal(size=T)

work = tempfile.mkdtemp(prefix="mdra_demo_")
csv = os.path.join(work, "recording.csv")
np.savetxt(csv, np.column_stack([t, speed, accel, brake, steer]), delimiter=",",
           header="time,speed,accel,brake,steer", comments="")

windows = os.path.join(work, "windows.jsonl")
run = os.path.join(work, "run")
steps = [
    # keep windows whose acceleration changes by at least 0.05 somewhere
    ["ingest", csv, "--window", "64", "--slide", "16", "--channel", "1", "--threshold", "0.05",
     "-o", windows],
    ["train", "--preset", "route", "-d", windows, "-o", run, "--max-outer-iters", "15", "--seed", "3"],
    ["report", "-c", os.path.join(run, "checkpoint.json"), "-d", windows, "-o", os.path.join(work, "report")],
    ["mds", "-c", os.path.join(run, "checkpoint.json"), "-d", windows, "--rgb",
     "-o", os.path.join(work, "rgb.tsv")],
]
for argv in steps:
    print("mdra", " ".join(argv[:1] + argv[1:]))
    code = main(argv)
    if code:
        raise SystemExit(code)

with open(os.path.join(work, "report", "masses.tsv")) as fh:
    print(fh.read())
print("outputs in", work)
