"""Noise-resilient graph embeddings via multi-hop feature quality
estimation.

The pipeline propagates node features over the normalized graph, extends
the graph with a cosine kNN overlay built from the summed multi-hop
features, re-propagates on the merged graph, and trains per-node
conditional Gaussian estimators whose meta-representations double as the
learned embeddings. The per-node sigma at hop 0 tracks injected feature
noise intensity.
"""

from .augmentation import build_augmented, cosine_knn, cosine_similarity_matrix
from .data import DatasetBundle, SbmSpec, gen_sbm, load_dataset, save_dataset
from .errors import (ConfigError, EvalError, InputError, MqeError,
                     NumericalError)
from .estimator import (HopEstimate, HopEstimator, MqeModel, TrainConfig,
                        backward, embeddings, forward, hop_estimates,
                        init_model, load_model, nll_loss, nll_terms,
                        read_embeddings, save_model, train, write_embeddings)
from .evaluation import (NoiseReport, ProbeResult, Splits, correlation_report,
                         hop_sweep, make_splits, pearson, probe, spearman)
from .graph import (SparseGraph, from_edge_list, merge_half, read_edge_list,
                    sym_normalize, write_edge_list)
from .noise import NoiseGroundTruth, NoiseSpec, inject, intensity
from .pipeline import (ExperimentConfig, RunResult, config_from_mapping,
                       run_experiment)
from .propagation import (FeatureSet, PropagatedStack, propagate_stack,
                          read_features, read_stack, summed_features,
                          write_features, write_stack)
from .rng import derive_rng, derive_seed

__version__ = "0.1.0"
