# Learners App
# Multi-Embodied Explorers Lab
# Central Answer Model classifiers written against numpy

__version__ = '1.0.0'
