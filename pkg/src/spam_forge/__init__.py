"""Spatial preferential attachment graphs: sampling, construction and analysis."""
__version__ = "0.1.0"

from .errors import (ArgumentError, ContractError, RegimeError, SamplingError, SizeCapError,
                     SpamForgeError, ValidationError)
from .model import (AttachmentRule, ModelParams, ProfileFunction, RegimeReport, TorusBox,
                    connection_probability, default_functions, regime_report, torus_distance)
from .points import MarkOracle, PointCloud, colour_points, edge_mark, sample_points
from .kernels import BACKEND
from .builder import (BuildLog, CoupledFamily, EvolvingGraph, build_accelerated,
                      build_coupled_family, build_exact, read_graph, snapshot, write_graph)
from .analysis import (components, graph_distance, hill_estimate, is_good, is_locally_good,
                       build_layers, two_connection_bound, typical_distance_sample)
from .local import (RootedGraph, canonical_form, empirical_indegree, empirical_neighbourhood,
                    h_neighbourhood, skorohod_modulus, truncated_degree_path)
