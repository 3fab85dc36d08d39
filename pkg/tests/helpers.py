"""Shared generators and brute-force oracles for the test suite."""

import itertools
import random

from starcast.policy import And, Leaf, Or

ALPHABET = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"]
BLS_ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001


def random_formula(rng: random.Random, n_leaves: int, alphabet=ALPHABET):
    """Uniformly shaped random AND/OR tree with exactly ``n_leaves`` leaves."""
    if n_leaves == 1:
        return Leaf(rng.choice(alphabet))
    k = rng.randint(1, n_leaves - 1)
    gate = And if rng.random() < 0.5 else Or
    return gate(random_formula(rng, k, alphabet), random_formula(rng, n_leaves - k, alphabet))


def bool_eval(node, attrs) -> bool:
    """Independent recursive evaluator (does not reuse policy.evaluate)."""
    if type(node).__name__ == "Leaf":
        return node.name in attrs
    lhs, rhs = bool_eval(node.left, attrs), bool_eval(node.right, attrs)
    return (lhs and rhs) if type(node).__name__ == "And" else (lhs or rhs)


def leaf_names(node) -> list[str]:
    if type(node).__name__ == "Leaf":
        return [node.name]
    return leaf_names(node.left) + leaf_names(node.right)


def subsets(items):
    items = sorted(set(items))
    for r in range(len(items) + 1):
        yield from (frozenset(c) for c in itertools.combinations(items, r))


def combine_rows(msp, rec, p=BLS_ORDER):
    """sum_i gamma_i * M_i over Z_p."""
    out = [0] * msp.n_cols
    for i, g in rec.items():
        for j, v in enumerate(msp.rows[i]):
            out[j] = (out[j] + g * v) % p
    return out


def is_target(vec) -> bool:
    return vec[0] == 1 and all(v == 0 for v in vec[1:])
