"""Regenerate the bundled approximate R245fa saturation table.

The fits below are smooth engineering approximations, good to a few percent
between 290 K and 370 K.  They are not an equation of state; swap in an
authoritative table (same column layout) for quantitative work.
"""
from pathlib import Path

import numpy as np

R_GAS = 8.314462618
MOLAR_MASS = 0.13405  # kg/mol
T_REF = 298.15


def properties(T):
    dT = T - T_REF
    p_sat = np.exp(22.614 - 3193.0 / T)
    rho_l = 1324.0 - 2.57 * dT
    # compressibility drops from ~0.95 at 290 K to ~0.85 at 370 K
    z = 0.95 - 0.10 * (T - 290.0) / 80.0
    rho_v = p_sat * MOLAR_MASS / (z * R_GAS * T)
    h_l = 232.0e3 + 1220.0 * dT
    h_v = 423.0e3 + 570.0 * dT
    mu_l = 4.0e-4 * np.exp(-0.011 * dT)
    mu_v = 1.0e-5 + 3.3e-8 * dT
    return np.column_stack([T, rho_l, rho_v, h_l, h_v, p_sat, mu_l, mu_v])


def main(out=None):
    out = Path(out) if out else Path(__file__).resolve().parents[1] / "src" / "thermosyphon" / "data" / "r245fa_approx.txt"
    T = np.arange(290.0, 370.0 + 0.5, 1.0)
    header = "\n".join([
        "Approximate R245fa saturation properties (smooth fits, NOT authoritative).",
        "critical_pressure_Pa = 3.651e6",
        "columns: T[K] rho_L[kg/m3] rho_V[kg/m3] H_L[J/kg] H_V[J/kg] p_sat[Pa] mu_L[Pa s] mu_V[Pa s]",
    ])
    np.savetxt(out, properties(T), fmt="%.10g", header=header)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
