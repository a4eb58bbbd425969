"""Load the IEEE 14-bus case and look at the measurement model.

Every bus angle, bus injection and branch flow is a device. Before any
telemetry arrives all of them are pseudo-measurements with variance 1e60,
except the slack angle, which is pinned at 0 with variance 1e-60.
"""
from gbpse.measurements import make_pseudo_set, variance_at
from gbpse.network import measurement_coefficients, neighbors
from gbpse.scenarios import ieee14

net = ieee14()
print(f"{net.n} buses, {len(net.branches)} branches, slack bus {net.slack}")
print("neighbours of bus 4:", sorted(neighbors(net, 4)))

# DC measurement functions are linear in the angles
print("flow 1-2 coefficients:", measurement_coefficients(net, "flow", 0))
print("injection at bus 8:  ", measurement_coefficients(net, "injection", 8))

mset = make_pseudo_set(net)
kinds = [d.kind for d in mset]
print(f"{len(mset)} devices: {kinds.count('angle')} angles, "
      f"{kinds.count('injection')} injections, {kinds.count('flow')} flows")
print("variance of T:1 and P:1-2 at t=0:",
      variance_at(mset["T:1"], 0.0), variance_at(mset["P:1-2"], 0.0))
