"""RBM classifiers trained via persistent contrastive divergence with
Gibbs, simulated-annealing, or annealer-client negative phases, built on
a QUBO/Ising compilation of the model energy."""

from .model import (Configuration, RbmModel, UnitKind, cond_hidden,
                    cond_visible, energy, exact_log_likelihood, free_energy,
                    gibbs_step, initialize_model, joint_prob_exact, load_model,
                    partition_exact, save_model)
from .qubo import (BinaryExpansion, IsingProblem, QuboProblem, binary_collapse,
                   binary_expand, ising_energy, qubo_objective, qubo_to_ising,
                   rbm_to_qubo)
from .samplers import (AnnealConfig, AnnealerClient, MockAnnealer,
                       ReplayAnnealer, SampleSet, annealer_submit,
                       boltzmann_exact, estimate_moments, simulated_anneal)
from .training import (Constant, EpochTrace, ExpToZero, GradientEstimate,
                       LrSchedule, PersistentChains, SmoothExp, TrainConfig,
                       grad_negative_from_samples, grad_positive, lr_value,
                       pcd_update, train)
from .metrics import (ConfusionMatrix, MetricsReport, evaluate, predict_label)
from .pipeline import (ColumnSpec, EncodedDataset, correlation_filter,
                       fit_encode, split, synth_generate, undersample_balance)

__version__ = "0.1.0"
