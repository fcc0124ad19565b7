"""Regenerate the frozen reference values used by the unit tests.

These are independent evaluations at 50 significant digits with mpmath; they
share no code with the package.  Run ``python3 tests/oracles/generate.py``
and paste the printed constants if a model constant ever changes.
"""

import mpmath as mp

mp.mp.dps = 50

Q, KB, EG = mp.mpf("1.6e-19"), mp.mpf("1.38e-23"), mp.mpf("1.1")

CH2 = dict(T_r=298, lambda_r=1000, p=1, I_r=mp.mpf("1.37e-8"), I_sc=mp.mpf("4.8"),
           k_I=mp.mpf("0.01"), R_s=mp.mpf("0.2"), R_sh=150, n_s=36, n_p=1)
KC = dict(T_r=298, lambda_r=1000, p=mp.mpf("1.3"), I_r=mp.mpf("9.825e-8"), I_sc=mp.mpf("8.21"),
          k_I=mp.mpf("0.0032"), R_s=mp.mpf("0.221"), R_sh=mp.mpf("415.405"), n_s=54, n_p=1)


def i_s(P, T):
    T = mp.mpf(T)
    return P["I_r"] * (T / P["T_r"]) ** 3 * mp.exp(Q * EG * (mp.mpf(1) / P["T_r"] - 1 / T)
                                                   / (P["p"] * KB))


def i_g(P, T, lam):
    return (P["I_sc"] + P["k_I"] * (mp.mpf(T) - P["T_r"])) * mp.mpf(lam) / P["lambda_r"]


def f(P, T, lam, v, i):
    a = Q / (P["n_s"] * P["p"] * KB * mp.mpf(T))
    z = mp.mpf(v) + i * P["R_s"]
    return (P["n_p"] * i_g(P, T, lam) - P["n_p"] * i_s(P, T) * (mp.exp(a * z) - 1)
            - z / P["R_sh"] - i)


def current(P, T, lam, v):
    lo, hi = mp.mpf(-20), mp.mpf(20)
    for _ in range(400):  # plain bisection, f decreasing in i
        mid = (lo + hi) / 2
        if f(P, T, lam, v, mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def six_state_A(C_pvi=3e-3, C_pvo=3e-3, C_bo=3e-3, C_L=3e-3, L_pv=10e-3, L_b=10e-3,
                R_pv=0.5, R_b=0.5, R_pvo=0.1, R_bo=0.1, d3=0.125):
    m = lambda x: mp.mpf(str(x))  # noqa: E731
    C_pvi, C_pvo, C_bo, C_L, L_pv, L_b, R_pv, R_b, R_pvo, R_bo, d3 = map(
        m, (C_pvi, C_pvo, C_bo, C_L, L_pv, L_b, R_pv, R_b, R_pvo, R_bo, d3))
    A = mp.zeros(6, 6)
    # u1 = u2 = 0, d1 = d2 = 0
    A[0, 2] = -1 / C_pvi
    A[1, 2] = 1 / C_pvo; A[1, 1] = -1 / (R_pvo * C_pvo); A[1, 5] = 1 / (R_pvo * C_pvo)
    A[2, 0] = 1 / L_pv; A[2, 1] = -1 / L_pv; A[2, 2] = -R_pv / L_pv
    A[3, 3] = -R_b / L_b; A[3, 4] = -1 / L_b
    A[4, 3] = 1 / C_bo; A[4, 4] = -1 / (R_bo * C_bo); A[4, 5] = 1 / (R_bo * C_bo)
    A[5, 1] = 1 / (R_pvo * C_L); A[5, 4] = 1 / (R_bo * C_L)
    A[5, 5] = -(1 / R_pvo + 1 / R_bo + d3) / C_L
    return A


if __name__ == "__main__":
    print("I_S_323_CH2 =", mp.nstr(i_s(CH2, 323), 20))
    print("I_S_298_CH2 =", mp.nstr(i_s(CH2, 298), 20))
    print("I_CH2_298_1000_V0 =", mp.nstr(current(CH2, 298, 1000, 0), 20))
    for v in (10, 14.6, 18):
        print(f"I_CH2_298_1000_V{v} =", mp.nstr(current(CH2, 298, 1000, mp.mpf(str(v))), 20))
    print("I_KC_298_1000_V26.3 =", mp.nstr(current(KC, 298, 1000, mp.mpf("26.3")), 20))
    print("I_KC_323_600_V20 =", mp.nstr(current(KC, 323, 600, 20), 20))
    A = six_state_A()
    x0 = mp.matrix([26, 40, 7, 1, 39, 40])
    x = mp.expm(A * mp.mpf("0.01")) * x0
    print("RC_DECAY_10MS =", [mp.nstr(x[k], 20) for k in range(6)])
    print("SETTLE_FIRST_ORDER_2PCT =", mp.nstr(mp.mpf("0.01") * mp.log(50), 20))
