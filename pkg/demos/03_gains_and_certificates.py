"""Designing the controllers: gains, feasibility certificates, and the
robustness constants they imply.

The linear gain places every closed-loop pole at -lambda. Homogeneous
protocols additionally need a shape matrix P compatible with the
dilation; feasibility is checked through three eigenvalue margins, and
small problems are solved directly from a Lyapunov-equation family.
"""

import numpy as np

from homocon import (
    DilationGenerator,
    IntegratorChain,
    barrier_matrix,
    linear_gain,
    robustness_constants,
    solve_lmi_p,
    verify_lmi_p,
    verify_lmi_xy,
)

chain = IntegratorChain(2)
lam = 1.0
K_lin = linear_gain(2, lam)
print("pole-placement gain:", K_lin)

# verify the published reference certificates
gen = DilationGenerator(2, -0.2)
P_ref = np.array([[0.0020, 0.0005], [0.0005, 0.0012]])
cert = verify_lmi_p(P_ref, gen, chain.A, chain.B, K_lin)
print("\nreference P margins:", np.round(cert.margins, 6), "feasible:", cert.feasible)

X_ref = np.array([[0.8281, -0.3107], [-0.3107, 0.9377]])
Y_ref = np.array([0.7502, 0.5000])
cxy = verify_lmi_xy(X_ref, Y_ref, gen, chain.A, chain.B)
print("reference (X, Y) margins:", np.round(cxy.margins, 4))
print("derived gain K = Y X^-1 =", np.round(cxy.K, 4))
print("derived shape P = X^-1 =\n", np.round(cxy.P, 4))

# solve fresh certificates for other degrees
for mu in (-0.5, -1.0):
    gen_mu = DilationGenerator(2, mu)
    solved = solve_lmi_p(gen_mu, chain.A, chain.B, K_lin)
    print(f"\nmu={mu}: solved P =\n", np.round(solved.P, 4))
    print("margins:", np.round(solved.margins, 6))

# robustness constants for the mu = -1 design
gen1 = DilationGenerator(2, -1.0)
solved = solve_lmi_p(gen1, chain.A, chain.B, K_lin)
consts = robustness_constants(solved.P, gen1, barrier_matrix(2, lam), lam, K_lin)
print("\nmu=-1 robustness: decay rate rho =", round(consts.rho, 4))
print("norm decay theta =", round(consts.theta, 4))
print("admissible matched-disturbance amplitude =", round(consts.q_bound, 4))
