"""Shared per-unit base and resolution constants.

All network quantities are expressed on a single-phase equivalent base of
1 MVA / 0.4 kV. Device powers are exchanged in kW / kvar and converted at the
solver boundary.
"""

S_BASE_KVA = 1000.0
V_BASE_KV = 0.4
I_BASE_A = S_BASE_KVA / V_BASE_KV  # 2500 A

V_NOMINAL_V = 230.0

DT_HOURS_DEFAULT = 0.25
STEPS_PER_DAY = 96


def kw_to_pu(p_kw: float) -> float:
    return p_kw / S_BASE_KVA


def pu_to_kw(p_pu: float) -> float:
    return p_pu * S_BASE_KVA
