"""evidcal: evidence-based dynamic calibration for generalized zero-shot
classification of point scenes.

Subpackages cover the differentiable core (diffcore), Dirichlet evidential
losses (evidential), calibrated stacking (calibration), class semantics and
scene-conditioned tuning (semantics), synthetic feature generation
(synthesis), training phases (pipeline), the synthetic benchmark (benchgen),
and the metric suite (metrics). The ``evidcal`` CLI ties them together.
"""

__version__ = "0.1.0"
