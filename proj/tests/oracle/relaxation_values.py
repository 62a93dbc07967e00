"""Independent marginal-relaxation bounds with complex Hermitian cvxpy variables.

Each constraint subset S gets a density matrix rho_S; overlapping pairs must
agree on the partial trace to S & S'. Uncovered qubits carrying a term get a
one-qubit density matrix. Terms go to the first containing subset; others
contribute their minimum eigenvalue.
"""
import itertools
import json

import cvxpy as cp
import numpy as np

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)


def kron(*ms):
    out = np.eye(1)
    for m in ms:
        out = np.kron(out, m)
    return out


def embed(op, support, target):
    """Operator on `support` (sorted) lifted to sorted `target`, qubit 0 most significant."""
    k = len(target)
    dim = 2 ** k
    out = np.zeros((dim, dim), dtype=complex)
    pos = [target.index(q) for q in support]
    for r in range(dim):
        for c in range(dim):
            rb = [(r >> (k - 1 - i)) & 1 for i in range(k)]
            cb = [(c >> (k - 1 - i)) & 1 for i in range(k)]
            if any(rb[i] != cb[i] for i in range(k) if i not in pos):
                continue
            rs = sum(rb[p] << (len(pos) - 1 - j) for j, p in enumerate(pos))
            cs = sum(cb[p] << (len(pos) - 1 - j) for j, p in enumerate(pos))
            out[r, c] = op[rs, cs]
    return out


def ptrace(rho, S, R):
    """Tr_{S minus R} as a cvxpy expression, keeping R (sorted subset of S)."""
    keep = [S.index(q) for q in R]
    drop = [i for i in range(len(S)) if i not in keep]
    out = rho
    dims = [2] * len(S)
    # trace out the highest-index positions first so earlier indices stay valid
    for i in sorted(drop, reverse=True):
        out = cp.partial_trace(out, dims, axis=i)
        dims.pop(i)
    return out


def xx_terms(n, J, B):
    terms = []
    for i in range(n):
        a, b = i, (i + 1) % n
        if J[i] != 0:
            terms.append((sorted([a, b]), J[i] * (kron(X, X) + kron(Y, Y))))
    for i in range(n):
        if B[i] != 0:
            terms.append(([i], B[i] * Z))
    return terms


def bound(n, terms, subsets):
    subsets = [sorted(s) for s in subsets]
    covered = set(q for s in subsets for q in s)
    blocks = list(subsets)
    offset = 0.0
    assign = {}
    for t, (sup, op) in enumerate(terms):
        owner = next((k for k, s in enumerate(blocks) if set(sup) <= set(s)), None)
        if owner is None and len(sup) == 1 and sup[0] not in covered:
            blocks.append(list(sup))
            covered.add(sup[0])
            owner = len(blocks) - 1
        if owner is None:
            offset += float(np.linalg.eigvalsh(op).min())
        else:
            assign[t] = owner
    if not blocks:
        return offset
    rhos = [cp.Variable((2 ** len(s), 2 ** len(s)), hermitian=True) for s in blocks]
    cons = [r >> 0 for r in rhos] + [cp.real(cp.trace(r)) == 1 for r in rhos]
    for a, b in itertools.combinations(range(len(blocks)), 2):
        R = sorted(set(blocks[a]) & set(blocks[b]))
        if R:
            cons.append(ptrace(rhos[a], blocks[a], R) == ptrace(rhos[b], blocks[b], R))
    obj = offset
    for t, k in assign.items():
        sup, op = terms[t]
        obj = obj + cp.real(cp.trace(embed(op, sup, blocks[k]) @ rhos[k]))
    prob = cp.Problem(cp.Minimize(obj), cons)
    for tol in (1e-10, 1e-9, 1e-8):
        try:
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
        except cp.error.SolverError:
            continue
        if prob.status == cp.OPTIMAL:
            return float(prob.value)
    # overlapping triples give redundant rows that interior-point codes reject
    prob.solve(solver=cp.SCS, eps_abs=1e-10, eps_rel=1e-10, max_iters=2_000_000)
    if prob.status != cp.OPTIMAL:
        raise RuntimeError(f"reference solver status {prob.status}")
    return float(prob.value)


def main():
    n = 6
    out = {}
    ring_pairs = [[i, (i + 1) % n] for i in range(n)]
    ring_triples = [[i, (i + 1) % n, (i + 2) % n] for i in range(n)]
    pattern_a = [[0, 1, 2], [2, 3, 4], [4, 5, 0]]
    pattern_c = [[0, 1, 2], [2, 3], [3, 4, 5], [5, 0]]
    for B in (0.5, 1.0, 3.0):
        terms = xx_terms(n, [1.0] * n, [B] * n)
        out[f"xx6_B{B}_pairs"] = bound(n, terms, ring_pairs)
        out[f"xx6_B{B}_triples"] = bound(n, terms, ring_triples)
        out[f"xx6_B{B}_pattern_a"] = bound(n, terms, pattern_a)
        out[f"xx6_B{B}_pattern_c"] = bound(n, terms, pattern_c)
    tri = [([0, 1], kron(Z, Z)), ([1, 2], kron(Z, Z)), ([0, 2], kron(Z, Z))]
    out["triangle_pairs"] = bound(3, tri, [[0, 1], [1, 2], [0, 2]])
    out["triangle_full"] = bound(3, tri, [[0, 1, 2]])
    out["xx_pair_min_eig"] = float(np.linalg.eigvalsh(kron(X, X) + kron(Y, Y)).min())
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
