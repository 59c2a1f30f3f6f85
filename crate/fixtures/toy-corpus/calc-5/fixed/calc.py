def running_max(xs):
    peaks = []
    cur = None
    for x in xs:
        cur = x if cur is None else max(cur, x)
        peaks.append(cur)
    return peaks
