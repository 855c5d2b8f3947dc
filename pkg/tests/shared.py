import numpy as np
from cfnoma.system import ChannelMatrix, SystemConfig, generate_channel

# Literal channels shared with tools/derive_oracles.py (users in ascending gain order).
H2 = np.array([[0.6 + 0.2j, 0.1 - 0.3j],
               [-0.2 + 0.5j, 1.1 + 0.4j]])
P2 = 100.0

H3 = np.array([[0.21 + 0.35j, -0.40 + 0.12j, 0.18 - 0.30j],
               [0.55 - 0.20j, 0.61 + 0.44j, -0.25 + 0.10j],
               [-0.90 + 0.72j, 0.33 - 0.81j, 0.64 + 0.58j]])
W3 = np.array([[0.8 + 0.1j, -0.3 + 0.5j, 0.2 - 0.4j],
               [0.1 - 0.6j, 0.7 + 0.2j, -0.5 + 0.3j],
               [-0.4 + 0.2j, 0.1 + 0.1j, 0.9 - 0.2j]])
A3 = np.array([[1, 0, 0],
               [1, 1, 0],
               [1, 1, 1]])


def seeded(K, M=4, corr=0.6, seed=0, **kw):
    cfg = SystemConfig(num_antennas=M, num_users=K, corr=corr, rng_seed=seed, **kw)
    return cfg, generate_channel(cfg, seed)


def random_sic(rng, K):
    """Uniformly random valid SIC matrix."""
    A = np.eye(K, dtype=np.int8)
    for i in range(K):
        for k in range(i + 1, K):
            c = rng.integers(3)
            if c == 1:
                A[i, k] = 1
            elif c == 2:
                A[k, i] = 1
    return A
