"""Rough Heston calibration by a small neural network, with attribution tools.

Subpackages and modules follow the pipeline order: ``pricer`` and ``mc`` build
implied-vol surfaces, ``dataset`` samples labelled surfaces, ``preprocess``
scales and whitens them, ``neuralnet`` learns the inverse map and
``interpret`` explains it. ``cli`` drives the whole chain.
"""

__version__ = "0.1.0"
