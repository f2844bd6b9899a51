# %% [markdown]
# # Network layers and the gradient check
#
# The forward pass is embed -> Gaussian time alignment -> per-scale temporal
# convolution -> scale fusion -> attention pooling -> sigmoid head. Every layer
# has a hand-written backward rule; here we look at the intermediate tensors
# and compare the analytic gradients with central differences.

# %%
import numpy as np

from mstan import model as M
from mstan.training import grad_check, tiny_problem

cfg = M.ModelConfig(d=3, d_h=4, scales=(1, 2), seed=0)
params, batch = tiny_problem(cfg, seed=0)
y_hat, cache = M.forward(params, batch, cfg)

print("risk scores:", y_hat)
print("alignment rows sum to", cache.A.sum(axis=-1)[batch.seq_mask])
print("scale weights beta:", cache.beta)
print("attention weights:\n", np.round(cache.gamma, 3))

# %% the alignment kernel narrows as sigma shrinks
t = np.array([[0.0, 1.0, 1.5, 6.0]])
for sigma in (0.5, 1.0, 4.0):
    print(sigma, np.round(M.align_weights(t, np.ones_like(t, dtype=bool), sigma)[0, 1], 3))

# %% analytic vs numerical gradients, with and without a learnable temperature
for learnable in (False, True):
    c = M.ModelConfig(d=3, d_h=4, scales=(1, 2), tau_learnable=learnable)
    print(f"tau_learnable={learnable}: max relative error {grad_check(c, seed=0):.2e}")
