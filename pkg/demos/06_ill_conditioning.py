"""Extreme variance spreads: BP stays finite where dense WLS cannot cope.

Three seconds into test case 1 only the flows 1-2, 2-3 and 3-4 are real
time (variance 1e-12 MW^2), the slack is pinned at 1e-60 and everything
else is pseudo at 1e60. The gain matrix of WLS is hopelessly conditioned,
yet BP recovers the observable island {1, 2, 3, 4} exactly.
"""
import numpy as np

from gbpse import factor_graph as fg
from gbpse import gbp
from gbpse.reference import wls_solve
from gbpse.scenarios import IEEE14_DAMPING, test_case_1
from gbpse.simulator import configuration_at

sc = test_case_1()
net = sc.network
mset, truth = configuration_at(sc, 3.5)
g = fg.build(net, mset, 3.5)
marg, sweeps, ok = gbp.run_to_convergence(g, gbp.init_messages(g), eps=1e-12,
                                          damping=IEEE14_DAMPING)
wls = wls_solve(net, mset, 3.5)
print(f"dense WLS: success={wls.success}, condition number {wls.cond:.1e}")
print(f"BP: converged={ok} in {sweeps} sweeps")
for b in net.bus_ids:
    s = net.index[b]
    tag = "island" if b <= 4 else "pseudo"
    print(f"  bus {b:2d} [{tag}] estimate {np.degrees(marg.mean[s]):9.4f} deg  "
          f"truth {np.degrees(truth[s]):9.4f} deg  var {marg.variance[s]:.1e} rad^2")
