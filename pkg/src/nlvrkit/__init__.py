"""Weakly supervised semantic parsing toolkit for NLVR-style visual reasoning.

A typed variable-free DSL with an executor, grammar-constrained program
search over a trainable log-linear scorer, and consistency-based training
that rewards programs mapping shared phrases of related utterances to the
same program parts.
"""

from .consistency import (
    DEFAULT_TAU,
    PhraseSpan,
    consistency_reward,
    multi_phrase_reward,
    pair_consistency,
    relevant_actions,
)
from .evaluation import (
    EvalReport,
    builtin_probe_cases,
    evaluate,
    language_consistency_probe,
)
from .executor import execute, reference_execute
from .generate import UtteranceTemplate, default_templates, generate_corpus, sample_scene
from .language import (
    Grammar,
    Program,
    build_grammar,
    linearize,
    parse_actions,
    parse_text,
    pretty_print,
)
from .model import ScorerParams, StepDistribution, grad_log_prob, program_log_prob, step_scores
from .pairing import (
    PhraseTemplate,
    UtterancePair,
    build_pairs,
    builtin_templates,
    ground_templates,
    load_pairs,
    save_pairs,
)
from .scene import Box, Example, Obj, Scene, load_corpus, save_corpus, tokenize
from .search import (
    Beam,
    BeamCandidate,
    beam_search,
    enumerate_programs,
    filter_correct,
    harvest_programs,
    renormalize,
)
from .training import (
    TrainConfig,
    TrainResult,
    consistency_objective_and_grad,
    iterative_train,
    mml_loss_and_grad,
    multi_neighbor_reward,
    rbm_objective_and_grad,
)

__version__ = "0.1.0"
