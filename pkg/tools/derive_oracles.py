"""Reference values frozen into the test suite.

Uses only numpy and scipy with the rate expressions written out per user, so
nothing here shares code with the package.  Run it and paste the printed
numbers into the tests if a fixture below changes.
"""

import itertools

import numpy as np
from scipy.optimize import minimize

SIGMA2 = 1.0

# fixtures (rows are users, already in ascending gain order)
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


def gains(h, W):
    return np.abs(h.conj() @ W) ** 2


def interference(A, G, i, k):
    """Interference at user i while decoding user k; users sorted by gain so
    u < k means u is weaker than k."""
    K = len(G)
    total = SIGMA2
    for u in range(K):
        if u == k:
            continue
        if i == k:
            c = 1 - A[k][u]
        elif u < k:
            c = 1 - A[i][u] + A[i][u] * A[u][k]
        else:
            c = 1 - A[i][u] * A[k][u]
        total += c * G[i][u]
    return total


def rates(A, h, W):
    G = gains(h, W)
    K = len(G)
    R = np.zeros((K, K))
    for i in range(K):
        for k in range(K):
            R[i, k] = np.log2(1 + G[i][k] / interference(A, G, i, k))
    return R


def effective_sum(A, h, W):
    R = rates(A, h, W)
    K = len(R)
    total = 0.0
    for k in range(K):
        caps = [R[k, k]] + [R[i, k] for i in range(K) if i != k and A[i][k]]
        total += min(caps)
    return total


def slsqp_best(A, h, P, starts=40, seed=0):
    """Multi-start SLSQP on the effective sum rate over real beam coordinates."""
    K, M = h.shape
    rng = np.random.default_rng(seed)

    def unpack(x):
        return (x[:M * K] + 1j * x[M * K:]).reshape(M, K)

    def obj(x):
        return -effective_sum(A, h, unpack(x))

    cons = [{"type": "ineq", "fun": lambda x: P - np.sum(x ** 2)}]
    best = -np.inf
    for _ in range(starts):
        x0 = rng.standard_normal(2 * M * K)
        x0 *= np.sqrt(P) / np.linalg.norm(x0)
        res = minimize(obj, x0, constraints=cons, method="SLSQP",
                       options={"maxiter": 500, "ftol": 1e-12})
        if np.sum(res.x ** 2) <= P * (1 + 1e-9):
            best = max(best, -res.fun)
    return best


def sic_matrices(K):
    pairs = [(i, k) for i in range(K) for k in range(i + 1, K)]
    for choice in itertools.product(range(3), repeat=len(pairs)):
        A = np.eye(K, dtype=int)
        for (i, k), c in zip(pairs, choice):
            if c == 1:
                A[i, k] = 1
            elif c == 2:
                A[k, i] = 1
        yield A


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    R3 = rates(A3, H3, W3)
    print("rates3 own", repr(np.diag(R3)))
    print("rates3 decode (1,0) (2,0) (2,1)", repr(R3[1, 0]), repr(R3[2, 0]), repr(R3[2, 1]))
    print("effective3", repr(effective_sum(A3, H3, W3)))
    sdma2 = slsqp_best(np.eye(2, dtype=int), H2, P2)
    print("sdma2 slsqp", repr(sdma2))
    best = max(slsqp_best(A, H2, P2) for A in sic_matrices(2))
    print("oracle2 slsqp", repr(best))
    h1 = H2[1:2]
    print("single-user capacity", repr(float(np.log2(1 + P2 * np.sum(np.abs(h1) ** 2) / SIGMA2))))
