"""Shared builders for in-memory test instances."""

import numpy as np
import pytest

from gsmoments import dataset


def make_matrix(rows, gene_ids=None, subject_ids=None) -> dataset.ExpressionMatrix:
    """Wrap already-centered rows in an ExpressionMatrix."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    p, n = rows.shape
    return dataset.ExpressionMatrix(
        gene_ids=tuple(gene_ids or (f"g{i}" for i in range(p))),
        values=rows,
        subject_ids=tuple(subject_ids or (f"s{j}" for j in range(n))),
        preprocessing=dataset.Preprocessing(centered=True),
    )


def make_phenotype(values) -> dataset.Phenotype:
    return dataset.center_phenotype(np.asarray(values, dtype=np.float64))


def make_resolved(rows, weights=None, name="set") -> dataset.ResolvedGeneSet:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    p = rows.shape[0]
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=np.float64)
    return dataset.ResolvedGeneSet(name=name, row_indices=np.arange(p), weights=w)


def random_instance(rng, n, p, weighted=True):
    """Centered Gaussian rows, centered phenotype, and a resolved set."""
    rows = rng.standard_normal((p, n))
    rows -= rows.mean(axis=1, keepdims=True)
    y = rng.standard_normal(n)
    phenotype = make_phenotype(y)
    weights = rng.uniform(0.2, 2.0, p) if weighted else np.ones(p)
    return make_matrix(rows), phenotype, make_resolved(rows, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(314159)
