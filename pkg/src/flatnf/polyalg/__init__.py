"""Re-centered polynomial algebra: multi-indices, brackets, weights and norms."""

from .multiindex import MultiIndex, key_conj, key_degree, key_is_integrable, key_n_minus, make_key
from .plain import PlainPoly, random_real_plain
from .poly import (
    Coefficient,
    RecenteredPoly,
    center,
    evaluate,
    gradient_eval,
    poisson_bracket,
    y_monomial,
)
from .weights import (
    NormRecord,
    ParamSchedule,
    WeightSystem,
    annulus_gap,
    annulus_samples,
    hs_norm,
    in_annulus,
    in_lambda,
    norms,
    project_scale,
    vector_field_diagnostic,
    weight_of,
)
