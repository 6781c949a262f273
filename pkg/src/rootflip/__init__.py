"""Root-flipped multiband SLR refocusing pulses with policy-gradient pattern search."""

from .agent import DeepRFSearch, PolicyNetwork, deeprf_slr_loop
from .bloch import SpinGrid, simulate_refocusing_profile, simulate_spin_echo
from .filters import band_edges, design_matched_excitation, design_min_phase_beta
from .pulse import DesignSpec, RfPulse, duration_for_peak, scale_to_peak
from .roots import FlipContext, RootPattern, pattern_to_pulse
from .search import exhaustive_search, greedy_tree_search, monte_carlo_search
from .slr import forward_slr, inverse_slr, min_phase_alpha

__all__ = [
    "DeepRFSearch", "DesignSpec", "FlipContext", "PolicyNetwork", "RfPulse", "RootPattern",
    "SpinGrid", "band_edges", "deeprf_slr_loop", "design_matched_excitation",
    "design_min_phase_beta", "duration_for_peak", "exhaustive_search", "forward_slr",
    "greedy_tree_search", "inverse_slr", "min_phase_alpha", "monte_carlo_search",
    "pattern_to_pulse", "scale_to_peak", "simulate_refocusing_profile", "simulate_spin_echo",
]
