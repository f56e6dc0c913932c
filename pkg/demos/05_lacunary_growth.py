"""A bounded, boundedly invertible weight that escapes every band-limited class.

The weight alternates between the identity and diag(h, 1/h) on segments
of length 3^-j.  Along the lacunary frequencies pi*3^k/2 the partial
transfer products collapse to exact diagonal powers of h, forcing the
structure function to grow faster than any linear bound: its de Branges
space is equivalent to no band-limited space.
"""

from canspec.oracles import nonpw_example

rep = nonpw_example(h=0.1, k_max=6)
print("k    |E(lam_k)|        |E|*h^(k/2)   |E|/lam_k   product err   tail factor")
for i, k in enumerate(rep.k_list):
    print(
        f"{k}  {rep.E_values[i]:14.4f}   {rep.ratios[i]:10.4f}   "
        f"{rep.lambda_over[i]:9.4f}   {rep.partial_product_errors[i]:.2e}   "
        f"{rep.tail_factor_bounds[i]:.6f}"
    )

print(
    "\n|E|/lambda grows strictly"
    f" ({' -> '.join(f'{v:.3f}' for v in rep.lambda_over)}):"
    " the structure function is not O(lambda), as a band-limited-equivalent"
    " space would require."
)
