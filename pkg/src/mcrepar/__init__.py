"""Monte-Carlo reparameterization for variational KL estimation.

Modules: :mod:`tape` (scalar reverse-mode autodiff with graph-size stats),
:mod:`distributions` (posterior families, prior term lists, closed forms),
:mod:`repar` (parameterization tuples), :mod:`kl` (KL estimators),
:mod:`bnn` (Bayesian MLP training) and :mod:`bench` (sweep CLI).
"""

__version__ = "0.1.0"
