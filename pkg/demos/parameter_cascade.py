"""Why the runtime presets do not use the certified parameters.

Prints the parameter cascade for a mild setting (small constants, coarse
eta): the early stages are ordinary numbers, but from eps1 on they are
towers of exponentials. The default constants at a realistic eta push
even log10(delta) far past what a double can hold.

    python3 demos/parameter_cascade.py
"""

from gelfand.budget import GeometryConstants, cascade, format_table, stability_rhs

mild = cascade(0.9, GeometryConstants(C3=1e-3, C4=1e-3))
print(format_table(mild))

print()
realistic = cascade(0.1, GeometryConstants())
print(format_table(realistic))
print(f"stages outside double range: {', '.join(realistic.underflow)}")

# the matching stability bound is tiny, but only because delta is unattainable
print(f"stability bound with C1 = C2 = 1: {stability_rhs(realistic.delta, None, 1.0, 1.0):.3g}")
