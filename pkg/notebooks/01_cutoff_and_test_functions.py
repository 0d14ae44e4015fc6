# %% [markdown]
# Cut-offs around a small ball and the test functions built from them.
#
# `eta` is 0 on a ball of radius 1.5*eps and 1 outside 2*eps.  Multiplying the
# stream function (shifted to vanish at the centre) by `eta` and taking the
# curl gives a divergence-free field that ignores the ball.  Below: how fast
# the norms of `eta` shrink with eps, and how close the test field stays to
# the original one.

# %%
import numpy as np

from smallbody import CutoffFamily, CutoffProfile, Grid
from smallbody.cutoff import evaluate_cutoff, make_test_function, measure_cutoff_scalings, measure_testfn_convergence
from smallbody.grid import divergence, lebesgue_norm
from smallbody.solver import abc_field

L = 2 * np.pi
grid = Grid(L, 64)
centre = (0.1, -0.2, 0.3)

# %% the profile itself
p = CutoffProfile()
rho = np.linspace(1.4, 2.1, 8)
print("rho   ", np.round(rho, 3))
print("eta   ", np.round(p.value(rho), 4))
print("eta'  ", np.round(p.d1(rho), 4))
print("max |eta'| =", round(p.max_d1, 4), " max |eta''| =", round(p.max_d2, 4))

# %% one member of the family on the grid
fam = CutoffFamily(p, L / 8, centre, grid)
eta = evaluate_cutoff(fam)
print("fraction of nodes with eta == 0:", np.mean(eta.values == 0))
print("fraction of nodes with 0 < eta < 1:", np.mean((eta.values > 0) & (eta.values < 1)))

# %% scaling exponents on a geometric schedule
fams = [CutoffFamily(p, L / d, centre, grid) for d in (8, 16, 32, 64)]
rep = measure_cutoff_scalings(fams, qs=(2.0, 6.0))
for e in rep.entries:
    print(f"{e.quantity:14s} q={e.q:3.1f}  slope {e.slope:6.3f}  expected {e.theory:6.3f}")

# %% the test function
phi = abc_field(grid)
phi_eps = make_test_function(phi, fam)
print("divergence / size:", lebesgue_norm(divergence(phi_eps)) / lebesgue_norm(phi_eps))
print("relative L2 distance to phi:", lebesgue_norm(phi_eps - phi) / lebesgue_norm(phi))

# %% convergence as eps shrinks
tf = measure_testfn_convergence(phi, fams)
for e in tf.entries:
    print(f"{e.quantity:12s} slope {e.slope:6.3f}  expected {e.theory:6.3f}")
print("||phi_eps||_H1 / ||phi||_H2:", np.round(tf.extras["bound_ratios"], 4))
