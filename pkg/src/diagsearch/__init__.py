"""Learning cost-sensitive diagnostic policies by AO* search and greedy baselines."""

from .aostar import AoConfig, AOStar, SearchTrace, ao_star, es_learn, ppp_prune
from .dataset import (CostModel, Dataset, Replica, Schema, discretize, load_cost_models, load_csv,
                      load_pima, load_replicas, make_replicas, preprocess, unit_costs)
from .errors import (ConfigError, DecodeError, DiagSearchError, EmptyDatasetError, ExecutionError,
                     ExperimentError, ParseError, UndefinedProbabilityError)
from .evaluation import (ALGORITHMS, Outcome, ScoreTable, bdelta_cost, chess_score, learn,
                         parse_algorithm, run_experiment)
from .greedy import GreedyConfig, grow_mcn, grow_nor, grow_voi
from .mdp import Diagnose, Estimator, State, Test
from .policy import DiagnoseNode, Policy, TestNode, load_policy, save_policy, to_dot, v_test

__version__ = "0.1.0"
