"""Berry phase of the rotating spin and its deviation from the exact cyclic phase."""

# %%
import math

from adiabatic_audit import SpinHalfParams, geometric_phase_spin

params = SpinHalfParams(10.0, 0.1, math.pi / 3)
period = 2 * math.pi / params.omega

# %%
for periods in (1, 2, 3):
    rep = geometric_phase_spin(params, periods * period, n_steps=40000 * periods)
    print(f"{periods} period(s): gamma_adiabatic={rep.gamma_adiabatic:+.6f} "
          f"(solid angle {rep.gamma_solid_angle:+.6f})")
    print(f"    delta_gamma={rep.delta_gamma:+.5e}  first-order estimate "
          f"{rep.delta_gamma_formula:+.5e}")
    # starting exactly in |E(0)> instead of the cyclic state adds a second-order admixture
    print(f"    non-cyclic start: delta_gamma={rep.delta_gamma_noncyclic:+.5e}")

# %%
# the two levels pick up opposite Berry phases
for branch in (0, 1):
    rep = geometric_phase_spin(params, period, 20000, branch=branch)
    print(f"branch {branch}: gamma_adiabatic = {rep.gamma_adiabatic:+.6f}")
