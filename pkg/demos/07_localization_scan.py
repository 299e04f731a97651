"""
Inverse participation ratio across energy windows
=================================================

The IPR is large for concentrated states and close to 1/area for spread-out
ones.  A scan compares the median over a low and a high window.
"""

import math

from pointscatter.ensemble import ScanConfig, UniformTorus, localization_scan

cfg = ScanConfig(UniformTorus(2 * math.pi, 16), ((5.0, 20.0), (1e3, 1e4)), M=4, seed=10)
_, summary = localization_scan(cfg)
print(f"alpha_2 = {summary['alpha']:.5f}")
for row in summary["windows"]:
    print(f"window {row['window']}: median IPR {row['median_ipr']:.4f}, "
          f"median L_loc {row['median_l_loc']:.2f}, delocalized fraction {row['fraction_delocalized']:.2f}")
print(f"uniform IPR on this torus: {1 / (2 * math.pi) ** 2:.4f}")
