"""Bayesian header with spectral normalization and label-noise tools."""

import json

from ._lipb import (
    BayesHeader,
    FeatureDataset,
    FormatError,
    LipbError,
    PredictiveSummary,
    adaptive_forget_rate,
    auc_pr,
    auc_roc,
    bimodality,
    fuse,
    fusion_weight,
    inject,
    knn_suspicion,
    leave_one_seed_out,
    make_blobs,
    posterior_eta,
    read_features,
    uncertainty_suspicion,
    write_features,
)
from ._lipb import run_experiment as _run_experiment


def run_experiment(config):
    """Run the (eta, seed) grid; `config` is a dict, the report comes back as one."""
    return json.loads(_run_experiment(json.dumps(config)))


__all__ = [
    "BayesHeader",
    "FeatureDataset",
    "FormatError",
    "LipbError",
    "PredictiveSummary",
    "adaptive_forget_rate",
    "auc_pr",
    "auc_roc",
    "bimodality",
    "fuse",
    "fusion_weight",
    "inject",
    "knn_suspicion",
    "leave_one_seed_out",
    "make_blobs",
    "posterior_eta",
    "read_features",
    "run_experiment",
    "uncertainty_suspicion",
    "write_features",
]
