from .base import GENERATORS, agrawal_label, gen_base, mixed_label
from .bayesnet import (BayesNetSpec, fixed_bayes_spec, gen_bayes_net, random_bayes_spec,
                       sample_bayes_net)
from .perturb import PERTURBATIONS, LabeledStream, parse_perturbation, perturb, shuffle_baseline
from .streams import gen_sensor_fault, two_cluster_swap

__all__ = [
    "GENERATORS", "agrawal_label", "gen_base", "mixed_label",
    "BayesNetSpec", "fixed_bayes_spec", "gen_bayes_net", "random_bayes_spec", "sample_bayes_net",
    "PERTURBATIONS", "LabeledStream", "parse_perturbation", "perturb", "shuffle_baseline",
    "gen_sensor_fault", "two_cluster_swap",
]
