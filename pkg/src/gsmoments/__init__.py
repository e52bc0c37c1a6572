"""Gene-set association p-values from exact permutation moments.

The moment path fits a normal or range-rescaled beta to the permuted
linear statistic and a scaled chi-square to the permuted quadratic
statistic, using closed-form permutation moments instead of Monte-Carlo
permutation. Seedable permutation and rotation oracles live alongside for
verification at desk scale.
"""

from .dataset import (
    ExpressionMatrix,
    GeneSet,
    GeneSetCollection,
    Phenotype,
    Preprocessing,
    ResolvedGeneSet,
    center_and_scale,
    center_phenotype,
    quantile_transform,
    resolve_gene_set,
)
from .errors import DegenerateError, GsmError, InputError
from .gsio import ResultRow, parse_expression_tsv, parse_gmt, parse_phenotype, write_results
from .moments import (
    LinearMoments,
    MomentMatrix,
    ObservedStatistics,
    PseudoGene,
    QuadraticMoments,
    beta_hat,
    build_atb,
    build_pseudo_gene,
    corollary2_cov,
    excess_kurtosis_diag,
    lemma1_cross_moment,
    lemma2_fourth_moment,
    linear_moments,
    linear_range,
    linear_variance,
    observed_statistics,
    quadratic_moments,
)
from .refdist import (
    NormalRef,
    PValueSet,
    ScaledBetaRef,
    ScaledChiSqRef,
    adjust_pvalues,
    fit_normal,
    fit_scaled_beta,
    fit_scaled_chisq,
    pvalues_beta,
    pvalues_chisq,
    pvalues_normal,
)
from .resampling import (
    PermutationPlan,
    ResamplingResult,
    RotationPlan,
    batch_resampling_pvalues,
    enumerate_betas,
    enumerate_moments,
    helmert_contrast,
    permutation_pvalues,
    rotation_pvalues,
    sample_permutation,
    sample_rotation,
)
from .specfun import norm_cdf, norm_quantile, reg_inc_beta, reg_inc_gamma_upper

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
