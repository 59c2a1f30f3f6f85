def running_max(xs):
    peaks = []
    cur = 0
    for x in xs:
        cur = max(cur, x)
        peaks.append(cur)
    return peaks
