"""Desk-scale verification artifact for transition-kernel bounds of weakly
coupled parabolic systems with unbounded diffusion, drift, and potential
coupling.

Subpackage map:

* coefficients: coefficient containers, the cooperative potential, coupling
  reachability, and the polynomial/exponential growth families;
* hypotheses: structural hypothesis checks and the numeric constants ledger;
* lyapunov: Lyapunov function synthesis (static and time-dependent) and
  certificate validation;
* bounds: the kernel-bound majorant, polynomial-root contract, and decay
  evaluators;
* solver: Dirichlet finite-difference semigroup and kernel-column solver;
* verify: numeric checks tying solver output to the certified bounds;
* config + cli: flat key=value run configuration and the command line tool.
"""

__version__ = "0.1.0"
