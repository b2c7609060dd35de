"""
Learning Module
===============
Online estimation of classifier competences from agreement data.
"""

from .online_learn import LabelMatrix, LearnedCompetences, online_learn

__all__ = ["LabelMatrix", "LearnedCompetences", "online_learn"]
