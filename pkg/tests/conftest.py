import numpy as np
import pytest

from gbpse import factor_graph as fg
from gbpse.measurements import make_pseudo_set
from gbpse.network import measurement_coefficients, parse_case
from gbpse.scenarios import ieee14 as _ieee14

TWO_BUS = """\
[buses]
1 slack
2
[branches]
1 2 -10
"""


@pytest.fixture(scope="session")
def ieee14():
    return _ieee14()


@pytest.fixture
def two_bus():
    return parse_case(TWO_BUS)


def random_radial_case(rng, n):
    """Random tree on buses 1..n rendered as case text, slack at bus 1."""
    lines = ["[buses]", "1 slack"] + [str(i) for i in range(2, n + 1)] + ["[branches]"]
    for j in range(2, n + 1):
        i = int(rng.integers(1, j))
        b = -float(rng.uniform(2.0, 40.0))
        lines.append(f"{i} {j} {b!r}" if rng.random() < 0.5 else f"{j} {i} {b!r}")
    return "\n".join(lines) + "\n"


def tree_diameter(net):
    """Longest shortest path (in branches) between two buses."""
    def farthest(src):
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for i in frontier:
                for j in net._adjacency[i]:
                    if j not in dist:
                        dist[j] = dist[i] + 1
                        nxt.append(j)
            frontier = nxt
        far = max(dist, key=dist.get)
        return far, dist[far]

    a, _ = farthest(net.bus_ids[0])
    return farthest(a)[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def accurate_wls(g):
    """WLS mean and marginal variances of the problem a factor graph encodes,
    accurate well beyond float64 conditioning limits."""
    H = g.jacobian().astype(np.longdouble)
    w = 1.0 / g.variance.astype(np.longdouble)
    G = H.T @ (w[:, None] * H)
    rhs = H.T @ (w * g.value.astype(np.longdouble))
    Gd = G.astype(np.float64)
    x = refined_solve_l(Gd, G, rhs)
    cov = refined_solve_l(Gd, G, np.eye(len(Gd), dtype=np.longdouble))
    return x.astype(np.float64), np.diag(cov).astype(np.float64)


def refined_solve_l(Gd, Gl, B, iters=8):
    X = np.linalg.solve(Gd, B.astype(np.float64)).astype(np.longdouble)
    for _ in range(iters):
        R = B - Gl @ X
        X = X + np.linalg.solve(Gd, R.astype(np.float64))
    return X


def random_set(net, rng, lo=-6, hi=6, kinds=("angle", "injection", "flow")):
    """Devices on ``net`` with values from a random operating point and
    log-uniform variances (device units)."""
    mset = make_pseudo_set(net, anchor_slack=False, kinds=kinds)
    theta = rng.normal(0, 0.2, net.n)
    theta[net.index[net.slack]] = 0.0
    for d in mset:
        scale = fg.unit_scale(net, d.kind)
        c = measurement_coefficients(net, d.kind, d.location)
        exact = sum(v * theta[net.index[b]] for b, v in c.items()) / scale
        var = 10 ** rng.uniform(lo, hi) / scale**2
        d.value_si = d.pseudo_value_si = exact + rng.normal(0, np.sqrt(var) * 1e-3)
        d.sigma2_rt = d.sigma2_ps = var
    return mset


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
