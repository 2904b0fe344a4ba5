"""Feature attributions for the calibration network and their grid heat maps."""

from roughnet.interpret.backprop import deeplift_rescale, gradient_input, lrp_epsilon
from roughnet.interpret.base import METHODS, AttributionResult
from roughnet.interpret.heatmap import HeatMap, aggregate_heatmap, overall_heatmap
from roughnet.interpret.lime import LimeConfig, lime_explain, lime_many
from roughnet.interpret.shapley import choose_background, shapley_exact, shapley_global, shapley_sampled

__all__ = [
    "METHODS", "AttributionResult", "HeatMap", "LimeConfig", "aggregate_heatmap", "choose_background",
    "deeplift_rescale", "gradient_input", "lime_explain", "lime_many", "lrp_epsilon", "overall_heatmap",
    "shapley_exact", "shapley_global", "shapley_sampled",
]
