"""Test case 1: flow measurements arrive one per second along a spanning tree.

Each arrival makes one more angle observable, and the estimator picks it
up within a fraction of a second of simulated time without ever being
restarted. Pass an output directory to also write per-bus plot data.
"""
import sys

import numpy as np

from gbpse.scenarios import NOMINAL_INJECTIONS_MW, TABLE_I, operating_point, test_case_1
from gbpse.simulator import run, write_plotdata

sc = test_case_1()
net = sc.network
snaps = run(sc)
truth = np.degrees(operating_point(net, NOMINAL_INJECTIONS_MW))
times = np.array([s.time for s in snaps])
theta = np.array([s.theta_deg for s in snaps])

print(" t(s)  flow   bus  estimate(deg)  truth(deg)  settled after")
for t, i, j in TABLE_I:
    col = net.index[j]
    err = np.abs(theta[:, col] - truth[col])
    after = times[(times >= t) & (err < 1e-3)]
    print(f"{t:5d}  {i:2d}-{j:<2d}  {j:4d}  {theta[-1, col]:13.4f}  {truth[col]:10.4f}"
          f"  {after[0] - t:.2f} s")

if len(sys.argv) > 1:
    write_plotdata(snaps, net.bus_ids, sys.argv[1])
    print("plot data written to", sys.argv[1])
