import os
import sys

import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def state_arrays(T=st.integers(1, 12), d=st.integers(1, 4)):
    """(T, d) float arrays with moderate finite entries."""
    return st.tuples(T, d).flatmap(lambda s: arrays(np.float64, s, elements=finite))


@st.composite
def trajectory_pairs(draw, max_T=12, max_d=4, same_length=False):
    from trajlabel import Trajectory

    d = draw(st.integers(1, max_d))
    T = draw(st.integers(1, max_T))
    Te = T if same_length else draw(st.integers(1, max_T))
    a = draw(arrays(np.float64, (T, d), elements=finite))
    b = draw(arrays(np.float64, (Te, d), elements=finite))
    return Trajectory(a, id="agent"), Trajectory(b, id="expert")


def random_pair(rng, T, Te, d):
    from trajlabel import Trajectory

    return (
        Trajectory(rng.normal(size=(T, d)), id="agent"),
        Trajectory(rng.normal(size=(Te, d)), id="expert"),
    )
