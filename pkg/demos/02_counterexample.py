"""A Hamiltonian pair with equal coupling moduli but opposite adiabatic fate.

H^b = i (dU^dagger/dt) U is built from the propagator U of H^a. Both have
the same |g/omega|, so the ratio test alone cannot tell them apart. The
cumulative drift condition can.
"""

# %%
import math

import numpy as np

from adiabatic_audit import (SpinHalfParams, TimeGrid, audit, build_counterexample_b,
                             build_spin_half, eigen_flow, evolve_state)

tau = 50.0
base = build_spin_half(SpinHalfParams(10.0, 0.1, math.pi / 2), tau)
grid = TimeGrid(tau, 20000)
partner = build_counterexample_b(base, grid)
flow_a, flow_b = eigen_flow(base, grid), eigen_flow(partner, grid)

# %%
diff = np.max(np.abs(np.abs(flow_a.couplings) - np.abs(flow_b.couplings)))
print(f"max | |g^a| - |g^b| | = {diff:.1e}")

# %%
for label, model, flow in (("H^a", base, flow_a), ("H^b", partner, flow_b)):
    rep = audit(flow, 0, epsilon=0.1)
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    print(f"{label}: A_max={rep.A_max:.4f} B={rep.B_value:.4f} C={rep.C_value:.4f} "
          f"admissible t={rep.tau_admissible:.2f} F(tau)={evo.fidelity[-1]:.5f}")

# %%
# B for H^b grows like omega t / 2: the coupling phase turns at the bare gap
print("omega tau / 2 =", 0.1 * tau / 2)
