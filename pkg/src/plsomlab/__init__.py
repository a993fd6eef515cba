"""Parameter-less self-organizing map laboratory."""

from .lattice import (Constant, Lattice, UniformBox, WeightMatrix, find_winner,
                      grid_distance, init_weights, read_weights_csv,
                      rng_streams, write_weights_csv)
from .som import SomParams, SomState, gaussian_neighborhood, som_step
from .plsom import (PlsomParams, PlsomState, epsilon_update, plsom_step, theta)
from .metrics import (Cell, MetricsSample, average_skew, cell_area,
                      cell_size_deviation, covered_fraction, density_vs_radius,
                      enumerate_cells, sample_metrics, topology_twist_indicator,
                      unused_space)
from .update_field import (ClippedGaussian, GridQuadrature, MonteCarloQuadrature,
                           UniformBoxDist, expected_displacement_map,
                           integrated_expected_displacement, interval_probability)
from .ordering import (VerifierConfig, VerificationReport, expected_update_vector,
                       field_value, is_ordered, lemma_property_suites,
                       simplified_update, verify_lemma4)
from .ik import (ArmModel, IkMap, IkSolver, forward_kinematics, gram_schmidt,
                 solve_ik, train_ik_map)
from .classify import (LabeledDataset, LabeledMap, MapConfig, SplitDataset,
                       evaluate, knn_classify, label_and_prune, load_delimited)
from .experiments import (ExperimentSpec, Phase, difficult_init_evolution,
                          gaussian_warping, parse_experiment_file, run,
                          som_sweep)

__version__ = "0.1.0"
