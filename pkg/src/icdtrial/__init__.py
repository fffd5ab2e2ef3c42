"""In-silico pre-clinical trials for implantable cardioverter-defibrillators.

A stochastic timed-automata heart model runs in closed loop against two
dual-chamber rhythm discriminators; therapies are adjudicated against the
model's ground-truth rhythm state, and a paired sequential probability
ratio test decides comparison hypotheses with bounded error rates.
"""

__version__ = "0.1.0"
