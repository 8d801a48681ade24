"""Composite letter schedules: construction, separation optimization, codewords.

A schedule presents every letter of the alphabet once per repetition, letters
interleaved round-robin across audio channels on a uniform onset grid. The
second repetition is ordered so that letters close together in the first pass
end up far apart in the second, which is what makes noisy click timings
decodable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Alphabet, DEFAULT_ALPHABET

# Letter pairs whose sounds are too easy to confuse when played back to back;
# candidate second-repetition orders containing them (either way round) are
# rejected.
DEFAULT_FORBIDDEN_PAIRS: frozenset[frozenset[str]] = frozenset(
    frozenset(p) for p in [("a", "h"), ("q", "k"), ("m", "n"), ("b", "d"), ("a", "i")]
)

# Reference composite orders for 1..5 channels, R=2. The first repetition is
# alphabetical within each channel's clip; the second is the optimized order.
# The 3-channel second repetition is a reconstruction: the source listing of
# that row was corrupted (27 symbols, no 't'), so the shipped order keeps the
# intact 25-symbol tail verbatim and restores full separation K=4 under the
# same channel grid.
PUBLISHED_ORDERS: dict[int, tuple[str, str]] = {
    1: ("abcdefghijklmnopqrstuvwxyz_.", "wrmhczupkfaxsnid_vqlgbytoje."),
    2: ("aobpcqdresftguhviwjxkylzm_n.", "lwgrb_kvfqazjuepnyitdomxhsc."),
    3: ("sajtbkuclvdmwenxfoygpzhq_ir.", "uaqyelsipxdk.howcj_gnvbrzfmt"),
    4: ("ahovbipwcjqxdkryelszfmt_gnu.", "bjrzgiqyfnowemuxalp_dhs.cktv"),
    5: ("fqwaglrxbhmsycintzdjou_ekpv.", "dimrwejnsxakotybgpuzcflv_hq."),
}

# Separation achieved by the reference orders, per channel count.
PUBLISHED_SEPARATION: dict[int, int] = {1: 4, 2: 4, 3: 4, 4: 3, 5: 3}


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class SeparationReport:
    """Separation achieved by an order pair.

    K is the largest k such that any two letters within k positions of each
    other in the first repetition sit more than k positions apart in the
    second. binding_pairs lists the (letter, neighbor, distance) triples with
    max(d1, d2) == K + 1, the pairs that block K + 1.
    """

    K: int
    binding_pairs: tuple[tuple[str, str, int], ...]


@dataclass(frozen=True)
class Schedule:
    """Composite presentation: per-repetition orders, channel map, onset times."""

    alphabet: Alphabet
    orders: tuple[str, ...]
    slot_interval: float
    channels: int
    onsets: tuple[float, ...] = ()
    channel_map: tuple[int, ...] = ()

    def __post_init__(self):
        A = len(self.alphabet)
        if not 1 <= self.channels <= 5:
            raise ScheduleError(f"channels must be in 1..5, got {self.channels}")
        if not self.slot_interval > 0:
            raise ScheduleError("slot_interval must be positive")
        if not self.orders:
            raise ScheduleError("at least one repetition required")
        for r, order in enumerate(self.orders):
            if sorted(order) != sorted(self.alphabet.symbols):
                raise ScheduleError(
                    f"repetition {r} order is not a permutation of the alphabet"
                )
        n_slots = A * len(self.orders)
        if not self.onsets:
            object.__setattr__(
                self, "onsets", tuple(i * self.slot_interval for i in range(n_slots))
            )
        if not self.channel_map:
            object.__setattr__(
                self, "channel_map", tuple(i % self.channels for i in range(n_slots))
            )
        if len(self.onsets) != n_slots or len(self.channel_map) != n_slots:
            raise ScheduleError("onsets/channel_map length must equal A * R")
        for a, b in zip(self.onsets, self.onsets[1:]):
            if not a < b:
                raise ScheduleError("onsets must strictly increase")
        # map (letter, repetition) -> composite slot
        slot_of = {}
        for r, order in enumerate(self.orders):
            for i, letter in enumerate(order):
                slot_of[(letter, r)] = r * A + i
        object.__setattr__(self, "_slot_of", slot_of)

    @property
    def R(self) -> int:
        return len(self.orders)

    @property
    def total_T(self) -> float:
        return self.onsets[-1] + self.slot_interval

    def slot(self, letter: str, r: int) -> int:
        try:
            return self._slot_of[(letter, r)]
        except KeyError:
            raise KeyError(f"unknown letter/repetition ({letter!r}, {r})") from None

    def onset(self, letter: str, r: int) -> float:
        return self.onsets[self.slot(letter, r)]

    def channel_of(self, letter: str, r: int) -> int:
        return self.channel_map[self.slot(letter, r)]

    def composite(self) -> str:
        return "".join(self.orders)


def build_default_schedule(
    channels: int,
    R: int = 2,
    slot_interval: float = 0.1,
    alphabet: Alphabet | None = None,
) -> Schedule:
    """Schedule from the reference orders for the given channel count.

    Supports channels 1..5 and R in {1, 2}; onsets sit on a uniform
    slot_interval grid and channels rotate round-robin in composite order.
    """
    if channels not in PUBLISHED_ORDERS:
        raise ScheduleError(f"unsupported channel count {channels} (have 1..5)")
    if R not in (1, 2):
        raise ScheduleError(f"default schedules exist for R in {{1, 2}}, got {R}")
    alphabet = alphabet or Alphabet(DEFAULT_ALPHABET)
    if alphabet.symbols != DEFAULT_ALPHABET:
        raise ScheduleError("reference orders are defined for the default alphabet")
    orders = PUBLISHED_ORDERS[channels][:R]
    return Schedule(alphabet, tuple(orders), slot_interval, channels)


def _position_maps(order_r1: str, order_r2: str) -> tuple[np.ndarray, np.ndarray]:
    if sorted(order_r1) != sorted(order_r2):
        raise ScheduleError("orders must permute the same alphabet")
    letters = sorted(order_r1)
    p1 = np.array([order_r1.index(ch) for ch in letters])
    p2 = np.array([order_r2.index(ch) for ch in letters])
    return p1, p2


def min_separation(order_r1: str, order_r2: str) -> SeparationReport:
    """Largest guaranteed neighbor separation between two orders.

    For every unordered letter pair, take d1 and d2 (position distances in
    each order). K = min over pairs of max(d1, d2) minus 1: any pair within
    K positions in one order is more than K apart in the other. Identical
    orders therefore score K = 0.
    """
    p1, p2 = _position_maps(order_r1, order_r2)
    letters = sorted(order_r1)
    d1 = np.abs(p1[:, None] - p1[None, :])
    d2 = np.abs(p2[:, None] - p2[None, :])
    m = np.maximum(d1, d2)
    np.fill_diagonal(m, np.iinfo(m.dtype).max)
    bound = int(m.min())
    binding = []
    for i, j in zip(*np.nonzero(np.triu(m == bound))):
        binding.append((letters[i], letters[j], bound))
    return SeparationReport(K=bound - 1, binding_pairs=tuple(binding))


def forbidden_violations(
    order: str,
    channels: int = 1,
    pairs: frozenset[frozenset[str]] = DEFAULT_FORBIDDEN_PAIRS,
    scope: str = "composite",
) -> list[tuple[str, str]]:
    """Forbidden adjacencies present in an order.

    scope="composite" (default) checks successive composite slots, which is
    where sounds overlap in time; the reference second-repetition orders are
    all clean under it. scope="clip" checks successive sounds within each
    channel's clip (slots taken every `channels` positions); scope="both"
    checks both.
    """
    if scope not in ("clip", "composite", "both"):
        raise ValueError(f"unknown scope {scope!r}")
    seqs: list[str] = []
    if scope in ("clip", "both"):
        seqs.extend(order[c::channels] for c in range(channels))
    if scope in ("composite", "both") or channels == 1:
        seqs.append(order)
    hits = []
    for seq in seqs:
        for a, b in zip(seq, seq[1:]):
            if frozenset((a, b)) in pairs:
                hits.append((a, b))
    return hits


def optimize_order(
    alphabet: Alphabet,
    order_r1: str,
    forbidden_pairs: frozenset[frozenset[str]] = DEFAULT_FORBIDDEN_PAIRS,
    seed: int = 0,
    budget: int = 600_000,
    channels: int = 1,
) -> tuple[str, SeparationReport]:
    """Search for a second-repetition order maximizing separation K.

    The search solves a sequence of decision problems: given the best K found
    so far, anneal the pairwise violation count for target K + 1 to zero,
    restarting from perturbations of the incumbent, modular-stride layouts or
    random orders until the move budget is spent. Moves swap two letters;
    most moves pick a letter from a currently violating pair, and a fraction
    greedily choose its best swap partner.

    When channels > 1, candidates keep every letter in the channel implied by
    its first-repetition slot (slot index mod channels), so each voice keeps
    its own letters. Candidates containing a forbidden adjacent pair, in the
    composite or inside any clip, are rejected. Deterministic given the seed.
    """
    A = len(alphabet)
    if sorted(order_r1) != sorted(alphabet.symbols):
        raise ScheduleError("order_r1 must permute the alphabet")
    if A < 3:
        raise ScheduleError("alphabet too small to optimize")
    rng = np.random.default_rng(seed)
    letters = sorted(alphabet.symbols)
    idx = {ch: i for i, ch in enumerate(letters)}
    pos1 = np.array([order_r1.index(ch) for ch in letters])
    D1 = np.abs(pos1[:, None] - pos1[None, :])
    chan = pos1 % channels
    all_letters = np.arange(A)
    members_of = [np.flatnonzero(chan == c) for c in range(channels)]
    slots_of = [np.flatnonzero(all_letters % channels == c) for c in range(channels)]
    fpairs = np.array(
        [(idx[a], idx[b]) for a, b in (tuple(p) for p in forbidden_pairs)
         if a in idx and b in idx],
        dtype=int,
    ).reshape(-1, 2)

    def project(score: np.ndarray) -> np.ndarray:
        # place each channel's letters into its slots in score order
        pos2 = np.empty(A, dtype=int)
        for c in range(channels):
            mem = members_of[c]
            pos2[mem[np.argsort(score[mem], kind="stable")]] = slots_of[c]
        return pos2

    def fresh_positions() -> np.ndarray:
        if rng.random() < 0.5:
            stride = int(rng.choice([5, 9, 11, 13, 17, 19, 23]))
            return project((stride * pos1 % A) + rng.random(A) * 0.5)
        return project(rng.permutation(A).astype(float))

    def forb_count(pos2: np.ndarray) -> int:
        if fpairs.size == 0:
            return 0
        d = np.abs(pos2[fpairs[:, 0]] - pos2[fpairs[:, 1]])
        hits = int((d == 1).sum())
        if channels > 1:
            same = chan[fpairs[:, 0]] == chan[fpairs[:, 1]]
            hits += int((same & (d == channels)).sum())
        return hits

    def violation_rows(pos2: np.ndarray, target: int) -> np.ndarray:
        d2 = np.abs(pos2[:, None] - pos2[None, :])
        m = np.maximum(D1, d2).astype(float)
        np.fill_diagonal(m, float(A + 1))
        return np.maximum(0.0, (target + 1) - m)

    def cost(pos2: np.ndarray, target: int) -> float:
        return violation_rows(pos2, target).sum() / 2.0 + 50.0 * forb_count(pos2)

    def pair_floor(pos2: np.ndarray) -> int:
        d2 = np.abs(pos2[:, None] - pos2[None, :])
        m = np.maximum(D1, d2)
        np.fill_diagonal(m, A + 1)
        return int(m.min())

    def order_of(pos2: np.ndarray) -> str:
        out = [""] * A
        for i, p in enumerate(pos2):
            out[p] = letters[i]
        return "".join(out)

    best: tuple[int, np.ndarray] | None = None

    def consider(pos2: np.ndarray) -> None:
        nonlocal best
        if forb_count(pos2) == 0:
            k = pair_floor(pos2) - 1
            if best is None or k > best[0]:
                best = (k, pos2.copy())

    consider(fresh_positions())
    spent = 0
    while spent < budget:
        target = best[0] + 1 if best is not None else 1
        if best is not None and rng.random() < 0.4:
            pos2 = best[1].copy()
            for _ in range(4):
                mem = members_of[int(rng.integers(channels))] if channels > 1 else all_letters
                if len(mem) >= 2:
                    i, j = rng.choice(mem, 2, replace=False)
                    pos2[i], pos2[j] = pos2[j], pos2[i]
        else:
            pos2 = fresh_positions()
        temp = 1.5
        cur = cost(pos2, target)
        for _ in range(min(40_000, budget - spent)):
            spent += 1
            roll = rng.random()
            if roll < 0.75:
                rows = violation_rows(pos2, target).sum(axis=1)
                bad = np.flatnonzero(rows > 0)
                i = int(rng.choice(bad)) if bad.size else int(rng.integers(A))
            else:
                i = int(rng.integers(A))
            mem = members_of[chan[i]] if channels > 1 else all_letters
            if len(mem) < 2:
                continue
            if roll < 0.15:
                # greedy: best swap partner for letter i
                best_j, best_c = -1, cur
                for j in mem:
                    if j == i:
                        continue
                    pos2[i], pos2[j] = pos2[j], pos2[i]
                    cj = cost(pos2, target)
                    pos2[i], pos2[j] = pos2[j], pos2[i]
                    if cj < best_c:
                        best_j, best_c = int(j), cj
                if best_j >= 0:
                    pos2[i], pos2[best_j] = pos2[best_j], pos2[i]
                    cur = best_c
            else:
                j = int(rng.choice(mem))
                if j == i:
                    continue
                pos2[i], pos2[j] = pos2[j], pos2[i]
                cand = cost(pos2, target)
                if cand <= cur or rng.random() < math.exp(
                    -(cand - cur) / max(temp, 1e-9)
                ):
                    cur = cand
                else:
                    pos2[i], pos2[j] = pos2[j], pos2[i]
            temp *= 0.9999
            if cur == 0.0:
                consider(pos2)
                break
    if best is None:
        raise ScheduleError(
            "no feasible order found within budget (constraints may be infeasible)"
        )
    order = order_of(best[1])
    return order, min_separation(order_r1, order)


def letter_codeword(schedule: Schedule, letter: str) -> np.ndarray:
    """Binary composite-position vector: 1 where the letter is uttered."""
    if letter not in schedule.alphabet:
        raise KeyError(f"unknown letter {letter!r}")
    A = len(schedule.alphabet)
    code = np.zeros(A * schedule.R, dtype=np.int8)
    for r in range(schedule.R):
        code[schedule.slot(letter, r)] = 1
    return code


def word_code(schedule: Schedule, word: str) -> np.ndarray:
    """Concatenated letter codewords; length A * R * len(word)."""
    if not word:
        raise ValueError("word must be nonempty")
    return np.concatenate([letter_codeword(schedule, ch) for ch in word])


def empirical_information_rate(confusion_counts, avg_T_Y: float) -> float:
    """Plug-in mutual information of a word confusion matrix, in bits/second.

    Rows index intended words, columns selected words. The joint distribution
    is counts / total (no reweighting by dictionary priors), so uniform usage
    of the rows gives the uniform-input rate. avg_T_Y is seconds per produced
    word.
    """
    counts = np.asarray(confusion_counts, dtype=float)
    if counts.ndim != 2:
        raise ValueError("confusion_counts must be a 2-D matrix")
    if (counts < 0).any():
        raise ValueError("confusion counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("confusion matrix is all zero")
    if not avg_T_Y > 0:
        raise ValueError("avg_T_Y must be positive")
    joint = counts / total
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    mi = float((joint[nz] * np.log2(joint[nz] / np.outer(px, py)[nz])).sum())
    return max(mi, 0.0) / avg_T_Y


# --- plain-text schedule files -------------------------------------------

def schedule_to_text(schedule: Schedule) -> str:
    lines = [
        "# composite click schedule",
        f"alphabet {schedule.alphabet.symbols}",
        f"channels {schedule.channels}",
        f"slot_interval {schedule.slot_interval!r}",
    ]
    for r, order in enumerate(schedule.orders):
        lines.append(f"order {r} {order}")
    lines.append("# slot <index> <repetition> <letter> <channel> <onset>")
    A = len(schedule.alphabet)
    for s in range(A * schedule.R):
        r, i = divmod(s, A)
        lines.append(
            f"slot {s} {r} {schedule.orders[r][i]} {schedule.channel_map[s]} "
            f"{schedule.onsets[s]!r}"
        )
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> Schedule:
    alphabet = None
    channels = None
    slot_interval = None
    orders: dict[int, str] = {}
    slots: dict[int, tuple[int, float]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "alphabet":
            alphabet = Alphabet(rest.strip())
        elif key == "channels":
            channels = int(rest)
        elif key == "slot_interval":
            slot_interval = float(rest)
        elif key == "order":
            r, order = rest.split(None, 1)
            orders[int(r)] = order.strip()
        elif key == "slot":
            parts = rest.split()
            slots[int(parts[0])] = (int(parts[3]), float(parts[4]))
        else:
            raise ScheduleError(f"unrecognized schedule line: {raw!r}")
    if alphabet is None or channels is None or slot_interval is None or not orders:
        raise ScheduleError("schedule file missing alphabet/channels/slot_interval/order")
    order_tuple = tuple(orders[r] for r in sorted(orders))
    n_slots = len(alphabet) * len(order_tuple)
    onsets: tuple[float, ...] = ()
    channel_map: tuple[int, ...] = ()
    if slots:
        if sorted(slots) != list(range(n_slots)):
            raise ScheduleError("slot lines must cover every composite position")
        channel_map = tuple(slots[s][0] for s in range(n_slots))
        onsets = tuple(slots[s][1] for s in range(n_slots))
    return Schedule(alphabet, order_tuple, slot_interval, channels, onsets, channel_map)


def load_schedule(path) -> Schedule:
    with open(path, "r", encoding="utf-8") as fh:
        return schedule_from_text(fh.read())


def save_schedule(path, schedule: Schedule) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(schedule_to_text(schedule))


def layout_csv(schedule: Schedule) -> str:
    """Letter layout as CSV (repetition lane plots): letter, r, channel, x, y."""
    rows = ["letter,repetition,channel,onset,channel_lane"]
    for r in range(schedule.R):
        for letter in schedule.orders[r]:
            rows.append(
                f"{letter},{r},{schedule.channel_of(letter, r)},"
                f"{schedule.onset(letter, r)!r},{schedule.channel_of(letter, r)}"
            )
    return "\n".join(rows) + "\n"
