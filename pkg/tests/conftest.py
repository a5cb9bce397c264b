import os

# Single-CPU friendly threading layer; avoids the TBB version probe warning.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
