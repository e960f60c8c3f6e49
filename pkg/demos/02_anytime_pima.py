"""
Anytime behaviour of AO* on the diabetes data
=============================================

The optimistic value v_opt rises and the realistic value v_real falls as the
search proceeds.  A small memory budget stops the search early, but the
realistic policy is still complete.
"""

from importlib.resources import files

from diagsearch import AoConfig, AOStar, discretize, load_cost_models, load_pima, make_replicas, preprocess, v_test

data = discretize(preprocess(load_pima()))
cm = load_cost_models(files("diagsearch") / "data" / "pima_costs.json")["high"].for_dataset(data)
rep = make_replicas(data, 1, seed=0)[0]

search = AOStar(data, cm, AoConfig(byte_limit=2_000_000), rep.train_idx)
search.run()
tr = search.trace
print(f"{tr.iterations} iterations, converged={tr.converged}, memory exhausted={tr.memory_exhausted}")

# %% bound trajectory, every 10% of the run
step = max(1, len(tr.records) // 10)
for rec in tr.records[::step] + tr.records[-1:]:
    print(f"  it {rec.iteration:5d}  v_opt {rec.v_opt:8.3f}  v_real {rec.v_real:8.3f}")

# %% the anytime policy is complete and can be scored on held-out data
policy = search.policy()
policy.validate(data)
print(f"test-set cost {v_test(policy, data, rep.test_idx, cm):.3f} with {policy.n_tests} test nodes")
