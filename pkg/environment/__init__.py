# Environment App
# Multi-Embodied Explorers Lab
# Household graphs, ground-truth placements and noisy perception

__version__ = '1.0.0'
