import sys

sys.path.insert(0, ".")
import calc

failures = 0

got = calc.clamp(5, 0, 10)
if got != 5:
    print("FAIL: tests/run_tests.py::test_clamp_inside")
    print("  at calc.clamp (calc.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<5> but was:<%s>" % (got,))
    failures += 1

got = calc.clamp(-3, 0, 10)
if got != 0:
    print("FAIL: tests/run_tests.py::test_clamp_low")
    print("  at calc.clamp (calc.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<0> but was:<%s>" % (got,))
    failures += 1

got = calc.clamp(15, 0, 10)
if got != 10:
    print("FAIL: tests/run_tests.py::test_clamp_high")
    print("  at calc.clamp (calc.py:2)")
    print("  at tests/run_tests.py:24")
    print("  expected:<10> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
