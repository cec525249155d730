"""
Gait-classification benchmark harness: KNN, one-class SVM and zero-shot LLM arms.
"""

__version__ = '0.1.0'
