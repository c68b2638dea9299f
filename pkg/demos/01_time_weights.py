import numpy as np

from twcrl.timeweight import (
    TimeWeightParams,
    closed_form_constant_k,
    divergence_table,
    mc_constant_k_conditional,
    time_weights,
)

spacer = "_" * 60

print("\nA failure at step T makes the states just before it suspect.")
print("w(t) says how much; it climbs from 0 at t=0 to 1 at t=T.")
p = TimeWeightParams(alpha=2.0, horizon=10)
w = time_weights(p)
for t, v in enumerate(w):
    print(f"  t={t:2d}  w={v:.6f}  " + "#" * int(40 * v))

print(spacer)

print("\nalpha sets how late the climb happens (T = 10):")
for alpha in (0.1, 0.5, 1.0, 2.0):
    w = time_weights(TimeWeightParams(alpha, 10))
    print(f"  alpha={alpha:<4}", " ".join(f"{v:.2f}" for v in w))

print(spacer)

# with alpha=2 over a 300 step episode only the last few steps carry weight
w = time_weights(TimeWeightParams(2.0, 300))
print("\nalpha=2, T=300, last five steps:", np.round(w[-5:], 4))
print("steps with w > 0.05:", int(np.sum(w > 0.05)))

print(spacer)

print("\nThe weight drops the normalising denominator of the exact conditional.")
print("That is harmless only where f(t,T)*T is large:")
rows = divergence_table(TimeWeightParams(2.0, 300))
for r in rows[-4:]:
    print(f"  t={r['t']}  f*T={r['fT']:.3g}  exact={r['exact']:.6f}  w={r['w']:.6f}  "
          f"|delta|={r['delta']:.1e}")
print(f"  t=150  exact={rows[150]['exact']:.4f}  w={rows[150]['w']:.2e}  (far outside)")

print(spacer)

print("\nSanity check of the conditional itself with a constant hazard k:")
for k, t, T in ((0.05, 5, 40), (0.1, 20, 60), (0.02, 50, 200)):
    est, se = mc_constant_k_conditional(k, t, T, 100_000, seed=t)
    ref = closed_form_constant_k(k, t, T)
    print(f"  k={k} t={t} T={T}: simulated {est:.4f} +- {se:.4f}, closed form {ref:.4f}")
