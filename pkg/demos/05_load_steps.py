"""Test case 3: tracking load steps with random telemetry.

The operating point steps at t = 100 s and t = 200 s. Power measurements
trickle in as a Poisson process and age back towards pseudo-measurements;
from t = 250 s angle measurements arrive as well and the error collapses.
"""
import sys

import numpy as np

from gbpse.scenarios import test_case_3, truth_series
from gbpse.simulator import run

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
sc = test_case_3(seed=seed)
net = sc.network
snaps = run(sc)
times = np.array([s.time for s in snaps])
theta = np.array([s.theta_deg for s in snaps])
truth = truth_series(sc, times)
cols = [net.index[b] for b in net.bus_ids if b != net.slack]
rms = np.sqrt(np.mean((theta[:, cols] - truth[:, cols]) ** 2, axis=1))

print(f"seed {seed}: {len(sc.arrivals)} arrivals")
for lo, hi in [(0, 50), (50, 100), (100, 150), (150, 200), (200, 250), (250, 300)]:
    win = (times > lo) & (times <= hi)
    print(f"  RMS angle error over ({lo:3d}, {hi:3d}] s: {rms[win].mean():.4f} deg")
