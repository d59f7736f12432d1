#!/usr/bin/env python3
"""Emit src/sobol_directions.cpp from the Joe-Kuo (new-joe-kuo-6.21201) direction
numbers bundled with SciPy. Only the first NUM_DIMS dimensions are kept."""
import os
import sys

import numpy as np
import scipy.stats._sobol as sobol_mod

NUM_DIMS = 1111

path = os.path.join(os.path.dirname(sobol_mod.__file__), "_sobol_direction_numbers.npz")
data = np.load(path)
poly = data["poly"][:NUM_DIMS]
vinit = data["vinit"][:NUM_DIMS]

out = sys.stdout if len(sys.argv) < 2 else open(sys.argv[1], "w")
w = out.write
w("// Generated by scripts/gen_sobol_table.py. Do not edit.\n")
w("// Joe-Kuo direction numbers (new-joe-kuo-6.21201), first %d dimensions.\n\n" % NUM_DIMS)
w('#include "neuropf/sobol_directions.hpp"\n\n')
w("namespace neuropf::detail {\n\n")
w("const std::array<SobolDimension, kSobolMaxDim> kSobolTable = {{\n")
for p, row in zip(poly, vinit):
    deg = int(p).bit_length() - 1
    m = ", ".join(str(int(v)) for v in row[:max(deg, 1)])
    w("    {%d, {%s}},\n" % (int(p), m))
w("}};\n\n")
w("}  // namespace neuropf::detail\n")
