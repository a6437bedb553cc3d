"""Small integer helpers used across the planner."""

import bisect


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def divisors(n: int) -> list[int]:
    """All positive divisors of n, ascending."""
    out = []
    i = 1
    while i * i <= n:
        if n % i == 0:
            out.append(i)
            if i != n // i:
                out.append(n // i)
        i += 1
    out.sort()
    return out


def divisor_window(n: int, target: float, radius: int = 2) -> list[int]:
    """Divisors of n within `radius` positions of target's insertion point."""
    divs = divisors(n)
    idx = bisect.bisect_left(divs, target)
    lo = max(0, idx - radius)
    hi = min(len(divs), idx + radius + 1)
    return divs[lo:hi]


def largest_divisor_at_most(n: int, bound: float) -> int:
    """Largest divisor of n that is <= bound (at least 1)."""
    best = 1
    for d in divisors(n):
        if d <= bound:
            best = d
    return best


def exact_div(num: int, den: int):
    """num / den as an int when exact, else as a float."""
    q, r = divmod(num, den)
    return q if r == 0 else num / den
