"""Workbench for tracing targeted adversarial attacks through CNNs.

Builds attribution graphs from benign and attacked inputs, merges them into
a comparison graph of suppressed / shared / emphasized neurons ranked by
vulnerability, and supports interactive neuron masking with live re-scoring
of the targeted attack success rate.
"""

from .attack import AttackConfig, attack_sweep, fgm_step, success_rate
from .attribution import (ActivationProfile, AttributionGraph, Condition, InfluenceTable,
                          aggregate_influence, aggregate_profile, build_graph,
                          per_input_influence)
from .comparison import (ActivationTrajectory, ComparisonGraph, VulnerabilityRecord,
                         build_trajectories, fractionate, layout, merge_and_classify)
from .errors import (ConfigError, MissingDependencyError, ModelLoadError, NotFoundError,
                     UnsupportedLayerError)
from .fixture import FixtureDataset, fixture_model
from .model import (EditSet, LayerSpec, ModelHandle, NeuronId, channel_activation,
                    input_gradient, kernel_slice, list_layers, masked, predict)
from .pipeline import PipelineContext, RunConfig, compute_comparison, evaluate_edits

__version__ = "0.1.0"
