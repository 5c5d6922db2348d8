"""Finite-state Schrödinger and Brödinger problems over Markov and reciprocal references."""

from .additive import (
    AdditiveFunctional,
    Content,
    Decomposition,
    Infeasible,
    Potentials,
    content_from_closed,
    decompose_to_potentials,
    density_measurability_check,
    extract_additive_functional,
    localize_functional,
    measure_from_functional,
    sum_decompose,
)
from .errors import *  # noqa: F401,F403
from .fixtures import (
    CounterexampleFixture,
    figure2_fixture,
    figure3_fixture,
    random_chain,
    random_reciprocal,
)
from .folding import admissible_lambdas, fold, fold_parameters, unfold
from .measure import (
    DensePathMeasure,
    FiniteMeasure,
    MarkovPathMeasure,
    StateSpace,
    TimeGrid,
    check_conditioning,
    disintegrate,
    marginal,
    markov_to_dense,
    relative_entropy,
    superadditivity_check,
    total_variation,
)
from .oracle import oracle_minimize
from .solvers import (
    Constraint,
    ProblemSpec,
    Solution,
    check_feasibility,
    solve,
    solve_brodinger,
    solve_brodinger_via_folding,
    solve_schrodinger,
)
from .structure import (
    conditional_factorize,
    is_irreducible,
    is_markov,
    is_reciprocal,
    tensorization_check,
    transition_density,
)

__version__ = "0.1.0"
