# Harness App
# Multi-Embodied Explorers Lab
# Experiment configuration, multi-seed trials, reports and the CLI

__version__ = '1.0.0'
