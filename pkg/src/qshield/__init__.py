"""qshield: a statevector-simulated quantum variational classifier, the
gradient attacks that break it, and a convolutional purifier that repairs
the damage. Everything is numpy + numba, deterministic from explicit seeds.
"""

__version__ = "0.1.0"
