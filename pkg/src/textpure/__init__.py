"""Text adversarial purification: mask, recover with a masked LM, classify the ensemble."""

from .advtrain import AdvTrainConfig, project_frobenius, train_adversarial
from .attack import AttackConfig, AttackResult, Candidates, QueryCounter, attack_dataset, greedy_attack
from .config import ConfigError, ExperimentConfig, load_config
from .corpus import (CLS, MASK, PAD, SPECIAL_IDS, UNK, CorpusError, LabeledExample, SynonymTable, Vocabulary,
                     build_synonym_table, detokenize, load_dataset, tokenize)
from .evaluate import EvalReport, ablation_grid, candidate_size_sweep, evaluate_defense
from .models import (CheckpointError, JointModel, ModelConfig, NonFiniteLossError, TrainConfig, fill_masks,
                     joint_loss, load_checkpoint, save_checkpoint, train_joint)
from .noise import NoiseSpec, make_noisy_copies, noisy_copy
from .purify import ModelVictim, PurifiedVictim, PurifyConfig, purify, purify_predict

__version__ = "0.1.0"
