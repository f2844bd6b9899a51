# %% [markdown]
# # Attention temperature and maximum length sweeps
#
# Each grid point retrains from scratch on the same data and seed. The CSVs
# written here match `mstan sweep-tau` / `mstan sweep-lmax`; plotting is a
# one-liner with pandas, e.g.
# `pd.read_csv("sweep_tau.csv").plot(x="tau", y="recall", logx=True)`.
# Expect tens of minutes on one CPU core at the default data size.

# %%
from mstan.config import RunConfig
from mstan.synthgen import generate_dataset
from mstan.sweeps import sweep_lmax, sweep_tau, write_rows

cfg = RunConfig(seed=0, n_items=600).validate()
data = generate_dataset(cfg.gen_config())

# %%
tau_rows = sweep_tau(cfg, data, grid=(0.1, 1.0, 10.0))
write_rows("sweep_tau.csv", "tau", tau_rows)
for r in tau_rows:
    print(f"tau={r['tau']:>5}: recall {r['recall']:.3f}, attention entropy {r['attention_entropy']:.3f}")

# %%
lmax_rows = sweep_lmax(cfg, data, grid=(25, 100, 200, 300))
write_rows("sweep_lmax.csv", "lmax", lmax_rows)
for r in lmax_rows:
    print(f"L_max={r['lmax']:>3}: F1 {r['f1']:.3f}")
