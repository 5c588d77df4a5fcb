import math

''' shared constants '''

__version__ = "1.0.0"

# tolerances used by every invariant check
TOL_ALGEBRA = 1e-12
TOL_SPECTRUM = 1e-10

# published bounds on the witness statistic
T_PPT = 2 * math.sqrt(2)
T_ONE_PAIR = 5 / math.sqrt(2)
T_TWO_BELL_PAIRS = 8 * math.sqrt(2) / 3

SIGNALS = (0, 1)
IDLERS = (2, 3)
