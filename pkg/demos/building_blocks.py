"""A tour of the pieces: unitary transitions, gradients, and the VB allocator.

Runs in a few seconds.  Nothing is trained here; the point is to see each
component behave on its own before they are combined.
"""

import numpy as np

from mdra.autoencoder import TimeSeries, init_model, loss_gradients, weighted_loss
from mdra.unitary import apply_unitary, build_unitary_params, unitary_matrix
from mdra.vb import ErrorMatrix, Hyperparams, run_vb

rng = np.random.default_rng(0)

# The recurrent transition is a product of planar rotations and phases, so it
# is unitary by construction: lengths are kept exactly.
p = build_unitary_params(L=8, capacity=4, fft_style=False, rng_seed=1)
v = rng.normal(size=8) + 1j * rng.normal(size=8)
print("angles:", p.n_angles)
print("|v| =", np.linalg.norm(v), " |Vv| =", np.linalg.norm(apply_unitary(p, v)))
V = unitary_matrix(p)
print("max |V^H V - I| =", np.abs(V.conj().T @ V - np.eye(8)).max())

# Gradients of the weighted loss are exact; compare one coordinate against a
# central difference.
model = init_model(L=3, D=1, K=2, capacity=2, fft_style=False, seed=2)
theta = model.to_vector() + rng.normal(0, 0.1, model.to_vector().size)
model = model.with_vector(theta)
batch = [TimeSeries(np.sin(np.arange(12) * w)[:, None], id=i) for i, w in enumerate((0.4, 1.3))]
R = np.array([[0.8, 0.2], [0.1, 0.9]])
g = loss_gradients(model, batch, R).to_vector()
i = int(np.argmax(np.abs(g)))
e = np.zeros_like(theta)
e[i] = 1e-6
fd = (weighted_loss(model.with_vector(theta + e), batch, R)
      - weighted_loss(model.with_vector(theta - e), batch, R)) / 2e-6
print(f"largest partial: analytic {g[i]:.8f}, finite difference {fd:.8f}")

# The allocator only sees a matrix of reconstruction errors.  Two groups of
# signals that are each reconstructed well by a different decoder end up
# assigned to those decoders; the third decoder gets no mass.
E = np.vstack([rng.uniform(0.5, 1.5, (10, 3)) * [1, 40, 40],
               rng.uniform(0.5, 1.5, (10, 3)) * [40, 1, 40]])
state = run_vb(ErrorMatrix(E, np.full(20, 32)), Hyperparams(0.5, 1.0, 0.01, 3), iters=10)
print("free energy trace:", np.round(state.trace, 2))
print("cluster masses:", np.round(state.R.mean(axis=0), 3))
