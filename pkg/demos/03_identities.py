"""The exact identities that pin the implementation down.

Each line is computed from a real run: the auxiliary sequence
z^t = (x^t - (1 - alpha) x^{t-1}) / alpha drifts by exactly the averaged
preconditioned momenta, the global offset is an exponential average of
those momenta, and several methods collapse bitwise onto simpler ones.

Run from the repo root:  python3 demos/03_identities.py
"""
import warnings

from fedsim.selfcheck import gradcheck_suite, identity_suite

warnings.simplefilter("ignore")

for check in identity_suite(full=False):
    print(check.line())
print()
for check in gradcheck_suite(n_checks=20):
    print(check.line())
