"""
Optimal search versus greedy growth on a toy problem
====================================================

Two cheap noisy tests and one expensive exact test.  AO* weighs the test
costs against the misdiagnosis costs; Nor only looks at gain per unit cost.
"""

import numpy as np

from diagsearch import AoConfig, CostModel, Estimator, ao_star, grow_nor, grow_voi, to_dot
from diagsearch.dataset import AttributeMeta, Dataset
from diagsearch.policy import expected_value

rng = np.random.default_rng(1)
m = 200
y = rng.integers(0, 2, m)
noisy = lambda p: np.where(rng.random(m) < p, y, 1 - y)
X = np.column_stack([noisy(0.8), noisy(0.75), y])

attrs = tuple(AttributeMeta(n, ("neg", "pos")) for n in ("quick", "cheap", "biopsy"))
data = Dataset(attrs, ("healthy", "sick"), X, y)

# missing a sick patient costs far more than a false alarm
cm = CostModel({"quick": 1.0, "cheap": 2.0, "biopsy": 25.0}, [[0, 120], [30, 0]], data.classes)

# %% search to optimality
policy, trace = ao_star(data, cm, AoConfig())
print(f"AO*: converged={trace.converged} after {trace.iterations} iterations")
print(f"  expected cost {policy.root.value:.3f}, {policy.n_tests} test nodes")

# %% greedy baselines
est = Estimator(data)
for name, learner in (("Nor", grow_nor), ("VOI", grow_voi)):
    p = learner(data, cm)
    print(f"{name}: expected cost {expected_value(p, est, cm):.3f}, {p.n_tests} test nodes")

# %% the optimal policy as Graphviz
print(to_dot(policy))
