"""Test case 2: how one flow arrival propagates through the network.

After the flow on branch 1-2 arrives, the angle at bus 2 settles first,
bus 3 later and bus 14, farthest away, last. The same ordering holds for
every arrival variance.
"""
from gbpse.scenarios import test_case_2
from gbpse.simulator import convergence_probe, settle_index

for var in (400.0, 100.0, 1e-4):
    sc = test_case_2(sigma2_rt=var)
    trace = convergence_probe(sc, [2, 3, 14])
    idx = [settle_index(trace, c, 0.01) for c in range(3)]
    ms = [i * sc.sweep_interval * 1e3 for i in idx]
    final = trace[-1][1]
    print(f"sigma2_rt={var:>7g} MW^2: settles after sweeps {idx} "
          f"({ms[0]:.1f}, {ms[1]:.1f}, {ms[2]:.1f} ms); final theta2={final[0]:.4f} deg")
