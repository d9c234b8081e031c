"""Slowing a schedule down: H(t/T) on [0, T] for growing T."""

# %%
import math

from adiabatic_audit import SpinHalfParams, build_spin_half, rescaling_scan

base = build_spin_half(SpinHalfParams(10.0, 0.1, math.pi / 3), 1.0)
scan = rescaling_scan(base, 0, [1, 2, 4, 8, 16, 32], n_steps=8000)

# %%
# A falls exactly as 1/T; B and C stay below the envelopes k/T taken from s in [0, 1]
print(f"{'T':>4} {'A_max*T':>10} {'B*T':>10} {'C*T':>10} {'1-F(T)':>10}")
for row in scan.rows():
    T = row["T"]
    print(f"{T:4.0f} {row['A_max'] * T:10.6f} {row['B'] * T:10.6f} {row['C'] * T:10.6f} "
          f"{row['infidelity']:10.2e}")
print(f"envelopes: k_B = {scan.B_envelope:.6f}, k_C = {scan.C_envelope:.6f}")
print(f"fitted exponents: A {scan.A_exponent:.3f}, B {scan.B_exponent:.3f}, C {scan.C_exponent:.3f}")
