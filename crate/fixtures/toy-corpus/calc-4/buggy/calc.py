def median(xs):
    ordered = sorted(xs)
    return ordered[len(ordered) // 2]
