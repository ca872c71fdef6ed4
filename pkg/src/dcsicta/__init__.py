"""Verifiable dining-cryptographers channel with SICTA collision resolution."""

from .analytics import expected_rounds, mst_estimate, throughput_curve
from .group import GroupParams, classify, encode_message, make_params
from .pads import combine, derive_bases, form_ciphertext, keygen
from .protocol import EpochView, ProtocolRunner, StrategyTag
from .sicta import OPTIMIZED, STANDARD, FIG1_SCRIPT, CoinScript, ResolutionTree
from .sim import SimConfig, SimMetrics, run_channel_sim, run_protocol_demo
from .transcript import Transcript, replay_verify
from .verification import Evidence, Verdict, Violation

__version__ = "0.1.0"
