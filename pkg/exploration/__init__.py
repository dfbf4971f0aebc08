# Exploration App
# Multi-Embodied Explorers Lab
# Graph walks that build each agent's observation memory

__version__ = '1.0.0'
