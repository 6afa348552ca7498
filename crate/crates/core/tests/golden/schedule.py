# Regenerates schedule_t10.txt with exact rational arithmetic.
from fractions import Fraction as F
import sys

T = int(sys.argv[1]) if len(sys.argv) > 1 else 10
alpha = [F(t, T) for t in range(T + 1)]
delta = [2 * (a - a * a) for a in alpha]
print("# t alpha delta delta_step c_x c_s c_f tilde_delta")
for t in range(T + 1):
    a, d = alpha[t], delta[t]
    if t == 0:
        row = [a, d, 0, 0, 0, 0, 0]
    else:
        ap, dp = alpha[t - 1], delta[t - 1]
        ds = d - dp * ((1 - a) / (1 - ap)) ** 2
        if t < T:
            cx = (dp / d) * (1 - a) / (1 - ap) + (ds / d) * (1 - ap)
            cs = ap - a * ((1 - a) / (1 - ap)) * (dp / d)
            cf = (1 - ap) * ds / d
            td = ds * dp / d
        else:
            # delta_T = 0; values are the limits as alpha_t -> 1
            cx, cs, cf, td = F(1), F(0), 1 - ap, dp
        row = [a, d, ds, cx, cs, cf, td]
    print(t, " ".join("%.17e" % float(v) for v in row))
