import sys

sys.path.insert(0, ".")
import textkit

failures = 0

got = textkit.truncate("hi", 5)
if got != 'hi':
    print("FAIL: tests/run_tests.py::test_short_text_unchanged")
    print("  at textkit.truncate (textkit.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<hi> but was:<%s>" % (got,))
    failures += 1

got = textkit.truncate("hello world", 5)
if got != 'hello...':
    print("FAIL: tests/run_tests.py::test_long_text_cut")
    print("  at textkit.truncate (textkit.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<hello...> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
