# %% [markdown]
# # Irregular series: loading and preprocessing
#
# Records arrive as JSONL, one patient per line, with `null` for a missing
# measurement. Preprocessing shifts time to start at 0, standardizes each
# feature with statistics from observed entries only, and forward-fills gaps.

# %%
import json
import tempfile
from pathlib import Path

import numpy as np

from mstan.seqdata import fit_standardizer, load_records, make_batch, preprocess

tmp = Path(tempfile.mkdtemp())
records = [
    {"id": "a", "label": 1, "t": [12.0, 13.5, 20.0, 20.0], "x": [[80, None], [None, 37.9], [95, 38.4], [97, 38.6]]},
    {"id": "b", "label": 0, "t": [3.0, 9.0], "x": [[72, 36.8], [70, None]]},
]
(tmp / "toy.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))

ds = load_records(tmp / "toy.jsonl", ["heart_rate", "temperature"])
s, y = ds.items[0]
print("timestamps (duplicate 20.0 collapsed to the last row):", s.timestamps)
print("observed mask:\n", s.observed)

# %% standardizer statistics come from observed entries only
stats = fit_standardizer(ds)
print("mean", stats.mean, "std", stats.std)

# %% full pipeline; leading gaps become 0, the standardized feature mean
clean = preprocess(ds, stats)
print(np.round(clean.items[0][0].values, 3))
print("time origin:", clean.items[0][0].timestamps)

# %% padding and truncation keep the most recent steps
batch = make_batch(clean.items, L_max=2)
print("seq_mask\n", batch.seq_mask)
print("kept timestamps\n", batch.timestamps)
