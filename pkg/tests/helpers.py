"""Random instance builders shared by the test modules."""
import itertools

import numpy as np

from pidaudit.datasets import AuditSchema
from pidaudit.dist import JointDistribution, Variable


def random_joint(rng, shape, names, sparsity=0.0):
    """Dirichlet(1) pmf on ``shape``; a fraction of cells may be zeroed."""
    w = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    if sparsity:
        w = w * (rng.random(shape) >= sparsity)
        if w.sum() == 0:
            w.flat[0] = 1.0
    variables = [Variable(n, tuple(range(k))) for n, k in zip(names, shape)]
    return JointDistribution.from_weights(variables, w)


def random_audit(rng, n_features, y_card=2, measurable=False, deterministic=False):
    """Joint over (Z, X1..Xn, Y) with binary Z and X.

    (Z, X) has a random joint law. Y passes through a random channel
    p(y | x) when ``measurable`` (so Z - X - Y is a Markov chain), and
    p(y | z, x) otherwise. ``deterministic`` makes Y a random function of X.
    """
    feats = tuple(f"X{i + 1}" for i in range(n_features))
    zx = rng.dirichlet(np.ones(2 ** (n_features + 1))).reshape((2,) * (n_features + 1))
    if deterministic:
        table = rng.integers(0, y_card, size=(2,) * n_features)
        channel = np.zeros((2,) * n_features + (y_card,))
        for x in itertools.product((0, 1), repeat=n_features):
            channel[x + (table[x],)] = 1.0
        joint = zx[..., None] * channel[None]
    elif measurable:
        channel = rng.dirichlet(np.ones(y_card), size=(2,) * n_features)
        joint = zx[..., None] * channel[None]
    else:
        channel = rng.dirichlet(np.ones(y_card), size=(2,) * (n_features + 1))
        joint = zx[..., None] * channel
    variables = [Variable("Z", (0, 1))] + [Variable(f, (0, 1)) for f in feats]
    variables.append(Variable("Y", tuple(range(y_card))))
    return JointDistribution.from_weights(variables, joint), AuditSchema("Z", "Y", feats)


def subsets(n):
    return range(1 << n)


# criterion number -> (passed, detail), printed by the terminal-summary hook
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
