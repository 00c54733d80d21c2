import random

import numpy as np
import pytest

from aggsim.core import AggregateFunction, Aggregate, init_mass_states, init_value_states
from aggsim.engine import FaultPlan, Mode, Simulator
from aggsim.protocols import PushPull, PushSum, RandomGrouping, Variant
from aggsim.topology import Topology, generate_erdos_renyi, induced_subgraph, largest_connected_component

COUNT = AggregateFunction(Aggregate.COUNT)
AVERAGE = AggregateFunction(Aggregate.AVERAGE)


def er_component(n, degree, seed):
    full = generate_erdos_renyi(n, degree, np.random.default_rng(seed))
    topo, _ = induced_subgraph(full, largest_connected_component(full))
    return topo


def psp_sim(topo, fn=COUNT, inputs=None, seed=0, **kw):
    proto = PushSum(init_mass_states(fn, topo.n, inputs))
    return Simulator(topo, proto, rng=random.Random(seed), **kw)


def pp_sim(topo, values, variant, seed=0, timeout=None, fn=AVERAGE, **kw):
    proto = PushPull(values, fn, Variant(variant), timeout=timeout)
    return Simulator(topo, proto, rng=random.Random(seed), **kw)


def drg_sim(topo, values, p_leader=0.2, seed=0, fn=AVERAGE, **kw):
    proto = RandomGrouping(values, fn, p_leader=p_leader)
    return Simulator(topo, proto, rng=random.Random(seed), **kw)


def only(sim, **match):
    """The single in-flight envelope whose fields match."""
    hits = [e for e in sim.in_flight() if all(getattr(e, k) == v for k, v in match.items())]
    assert len(hits) == 1, hits
    return hits[0]


@pytest.fixture
def triangle():
    # A=0, B=1, C=2 all connected
    return Topology.complete(3)


# acceptance verdicts, printed once at the end of the session
VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(VERDICTS):
        status, title, detail = VERDICTS[num]
        terminalreporter.write_line(f"criterion {num:2d} {status}: {title} | {detail}")
