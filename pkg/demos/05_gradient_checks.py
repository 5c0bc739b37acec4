"""
Finite-difference gradient checks
=================================

Every hand-written backward pass is compared with central differences.
"""

import time

from fefakit.gradcheck import run_suite

start = time.perf_counter()
results = run_suite(instances=10, model_instances=3)
for result in results:
    print(result)
print(f"{sum(r.passed for r in results)}/{len(results)} passed in {time.perf_counter() - start:.1f} s")
