"""Co-clustering toolkit for campus wireless usage traces.

Pipeline: parse netflow/DHCP/session traces, integrate them into per-period
user-by-domain online-time matrices, co-cluster the normalized joint
distribution with minimal mutual-information loss, derive per-location
context descriptors and location groupings, and score cross-period stability.
"""

__version__ = "0.1.0"

from .cocluster import (CoclusterConfig, CoclusterModel, EmptyClusterError, Prototypes,
                        association_matrix, build_prototypes, cocluster, kl_divergence,
                        load_model, loss, mutual_information, save_model)
from .locations import (ContextDescriptor, DissimilarityMatrix, InactiveBuildingError,
                        ThresholdGraph, average_dissimilarity, build_descriptors,
                        context_descriptor, cosine_dissimilarity, dissimilarity_histogram,
                        dissimilarity_matrix, hierarchical_clusters, maximal_cliques,
                        threshold_graph)
from .matrix import (ContingencyMatrix, JointDistribution, load_joint, load_matrix,
                     scale_matrix, write_matrix)
from .pipeline import (AmbiguousEndpointError, LeaseTimeline, Period, PipelineConfig,
                       PipelineResult, ResolvedFlow, UnknownPortError,
                       aggregate_online_time, build_session_intervals, filter_prefixes,
                       resolve_location, resolve_user, run_pipeline, select_top_domains)
from .stability import (EmptyOverlapError, PeriodMatrices, StabilityReport,
                        recreate_matrices, recreate_period, stability_report,
                        stability_score)
from .synth import (GroundTruth, PlantedSpec, adjusted_rand_index, brute_force_cocluster,
                    gen_planted_joint, gen_synthetic_traces, monthly_periods)
from .traces import (DhcpLease, FlowRecord, ParseError, PortBuildingMap, PrefixDomainMap,
                     SessionEvent, parse_dhcp_lease, parse_flow_record,
                     parse_session_event, prefix24)
