"""Domain distance measures, separability analysis, distance-regularized
training and bandit scheduling of source domains."""

from .analysis import (
    DistanceMatrix,
    InformativenessReport,
    build_distance_matrix,
    informativeness,
    informativeness_report,
    mixture_phi,
    split_probes,
    z1,
    z2,
)
from .bandit import BanditState, BanditTrace, RoundRobin, UCB
from .data import DomainDataset, gen_multisource, gen_synthetic, load_embedded, write_embedded
from .distances import (
    DomainBatch,
    FldConfig,
    KernelConfig,
    Measure,
    MixtureSpec,
    d_coral,
    d_cos,
    d_fld,
    d_l2,
    d_mixture,
    d_mmd,
    distance,
    grad_distance,
)
from .errors import DistanceNetError
from .model import LabeledBatch, ModelParams
from .training import ExperimentConfig, RunReport, run_seeds, train_multi, train_single

__version__ = "0.1.0"
