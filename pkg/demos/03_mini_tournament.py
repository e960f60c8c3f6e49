"""
A small tournament
==================

Every pair of learners is compared on each replica's test split with the
bootstrap test; wins and ties become chess scores.
"""

from importlib.resources import files

from diagsearch import discretize, load_cost_models, load_pima, make_replicas, preprocess, run_experiment

data = discretize(preprocess(load_pima()))
levels = {k: v.for_dataset(data) for k, v in load_cost_models(files("diagsearch") / "data" / "pima_costs.json").items()}
replicas = make_replicas(data, 2, seed=0)

exp = run_experiment(data, {"medium": levels["medium"]}, replicas,
                     ["AO*", "AO*-L", "SP-L", "MC-N", "MC-N-L", "Nor-L", "VOI"], seed=0, domain="pima")
print(exp.summary())

# %% head-to-head records, (wins, ties, losses)
for a, b in [("MC-N-L", "Nor-L"), ("AO*-L", "AO*"), ("SP-L", "MC-N-L")]:
    print(f"{a:7s} vs {b:7s}", exp.table.record("pima", a, b))
