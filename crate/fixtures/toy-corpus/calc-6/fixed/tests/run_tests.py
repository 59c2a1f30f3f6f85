import sys

sys.path.insert(0, ".")
import calc

failures = 0

got = calc.power(2, 5)
if got != 32:
    print("FAIL: tests/run_tests.py::test_power_positive")
    print("  at calc.power (calc.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<32> but was:<%s>" % (got,))
    failures += 1

got = calc.power(3, 0)
if got != 1:
    print("FAIL: tests/run_tests.py::test_power_zero")
    print("  at calc.power (calc.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<1> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
