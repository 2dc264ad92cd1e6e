"""Hypothesis strategy for random well-typed programs over a small list library."""

from hypothesis import strategies as st

LIBRARY = """
(define (length l)
  (let (e (null? l))
    (if e
        (let (z 0) (return z))
        (let (t (cdr l))
          (let (n (length t))
            (let (r (+ 1 n))
              (return r)))))))

(define (sum l)
  (let (e (null? l))
    (if e
        (let (z 0) (return z))
        (let (h (car l))
          (let (t (cdr l))
            (let (s (sum t))
              (let (r (+ h s))
                (return r))))))))

(define (append a b)
  (let (e (null? a))
    (if e
        (return b)
        (let (h (car a))
          (let (t (cdr a))
            (let (s (append t b))
              (let (r (cons h s))
                (return r))))))))

(define (rev l acc)
  (let (e (null? l))
    (if e
        (return acc)
        (let (h (car l))
          (let (t (cdr l))
            (let (a (cons h acc))
              (let (r (rev t a))
                (return r))))))))
"""


@st.composite
def programs(draw, max_lets: int = 10):
    """Program text whose main binds random applications and returns one variable."""
    nums: list[str] = []
    lists: list[tuple[str, bool]] = []  # (variable, known non-empty)
    lets: list[str] = []
    n = draw(st.integers(1, max_lets))
    for i in range(n):
        v = f"v{i}"
        choices = ["lit", "nil"]
        if nums:
            choices += ["prim", "scale", "div"]
            if lists:
                choices.append("cons")
        if lists:
            choices += ["null", "length", "sum", "cdr", "append", "rev"]
            if any(ne for _, ne in lists):
                choices.append("car")
        kind = draw(st.sampled_from(choices))
        if kind == "lit":
            rhs = str(draw(st.integers(-20, 20)))
            nums.append(v)
        elif kind == "nil":
            rhs = "nil"
            lists.append((v, False))
        elif kind == "prim":
            op = draw(st.sampled_from(["+", "-", "<", "="]))
            a = draw(st.sampled_from(nums))
            b = draw(st.one_of(st.sampled_from(nums), st.integers(-9, 9).map(str)))
            rhs = f"({op} {a} {b})"
            nums.append(v)
        elif kind == "scale":
            rhs = f"(* {draw(st.sampled_from(nums))} {draw(st.integers(-3, 3))})"
            nums.append(v)
        elif kind == "div":
            d = draw(st.sampled_from([-3, -2, -1, 1, 2, 3, 7]))
            rhs = f"(/ {draw(st.sampled_from(nums))} {d})"
            nums.append(v)
        elif kind == "cons":
            rhs = f"(cons {draw(st.sampled_from(nums))} {draw(st.sampled_from(lists))[0]})"
            lists.append((v, True))
        elif kind == "car":
            rhs = f"(car {draw(st.sampled_from([l for l, ne in lists if ne]))})"
            nums.append(v)
        elif kind == "cdr":
            src, ne = draw(st.sampled_from(lists))
            if not ne:
                continue  # the cdr of a possibly empty list may fail when forced
            rhs = f"(cdr {src})"
            lists.append((v, False))
        elif kind in ("null", "length", "sum"):
            op = "null?" if kind == "null" else kind
            rhs = f"({op} {draw(st.sampled_from(lists))[0]})"
            nums.append(v)
        elif kind == "append":
            (a, na), (b, nb) = draw(st.sampled_from(lists)), draw(st.sampled_from(lists))
            rhs = f"(append {a} {b})"
            lists.append((v, na or nb))
        else:
            (a, na), (b, _) = draw(st.sampled_from(lists)), draw(st.sampled_from(lists))
            rhs = f"(rev {a} {b})"
            lists.append((v, na))
        lets.append(f"(let ({v} {rhs})")
    names = nums + [l for l, _ in lists]
    if not names:
        lets.append("(let (k 0)")
        names = ["k"]
    if nums and draw(st.booleans()):
        tail = (f"(if {draw(st.sampled_from(nums))} (return {draw(st.sampled_from(names))}) "
                f"(return {draw(st.sampled_from(names))}))")
    else:
        tail = f"(return {draw(st.sampled_from(names))})"
    body = " ".join(lets) + " " + tail + ")" * len(lets)
    return LIBRARY + f"\n(define (main)\n  {body})\n"
