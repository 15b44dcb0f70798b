import os
import sys
from pathlib import Path

# single-threaded BLAS: reproducible reductions and no thread-pool thrash on
# small matrices (must be set before numpy loads)
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

sys.path.insert(0, str(Path(__file__).parent))
