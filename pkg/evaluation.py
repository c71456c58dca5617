"""
Event-level evaluation of detection reports against ground truth.

A ground-truth event counts as detected if a merged detection interval intersects the event widened by
`slack` samples on both sides. Each detection interval can account for one event only.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from detection.detector import DetectionReport
from gen.feeder import EventKind, GroundTruth
from util.errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 40
COMPARISON_COLUMNS = ['detector', 'precision', 'recall', 'f1', 'accuracy']


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    hits: list = field(default_factory=list)
    """Per ground-truth event (in time order): index of the matched detection interval, or None"""
    kinds: list = field(default_factory=list)
    """Per ground-truth event: its EventKind"""

    def per_kind_recall(self) -> dict:
        return per_kind_recall(self)


class Metrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    accuracy: float
    """tp / (tp + fp + fn); event-level true negatives are not defined"""


def _intersects(interval: tuple, lo: int, hi: int) -> bool:
    """Half-open detection [a, b) against closed [lo, hi]"""
    return interval[0] <= hi and interval[1] > lo


def match_events(intervals, truth: GroundTruth, slack: int = DEFAULT_SLACK) -> MatchResult:
    """
    Greedy matching in time order: each truth event takes the earliest unused detection interval that
    intersects [t_start - slack, t_end + slack].

    :param intervals: merged detection intervals [(start, end)], end exclusive
    """
    if slack < 0:
        raise DataError('Slack must be non-negative')
    detections = sorted((int(a), int(b)) for a, b in intervals)
    used = [False] * len(detections)
    result = MatchResult()
    first_open = 0
    for event in sorted(truth.events, key=lambda e: e.t_start):
        lo, hi = event.t_start - slack, event.t_end + slack
        while first_open < len(detections) and (used[first_open] or detections[first_open][1] <= lo):
            first_open += 1
        hit = None
        for k in range(first_open, len(detections)):
            if detections[k][0] > hi:
                break
            if not used[k] and _intersects(detections[k], lo, hi):
                hit = k
                break
        if hit is None:
            result.fn += 1
        else:
            used[hit] = True
            result.tp += 1
        result.hits.append(hit)
        result.kinds.append(event.kind)
    result.fp = used.count(False)
    return result


def metrics(m: MatchResult) -> Metrics:
    """
    :raise DataError: if there is nothing to score (tp + fp + fn == 0)
    """
    if m.tp + m.fp + m.fn == 0:
        raise DataError('No events and no detections: metrics are undefined')
    precision = m.tp / (m.tp + m.fp) if m.tp + m.fp else 0.0
    recall = m.tp / (m.tp + m.fn) if m.tp + m.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, f1, m.tp / (m.tp + m.fp + m.fn))


def per_kind_recall(m: MatchResult) -> dict:
    """
    :return: EventKind -> recall over the events of that kind (kinds without events are left out)
    """
    recall = {}
    for kind in EventKind:
        hits = [h is not None for h, k in zip(m.hits, m.kinds) if k is kind]
        if hits:
            recall[kind] = sum(hits) / len(hits)
    return recall


def window_confusion(report: DetectionReport, truth: GroundTruth) -> dict:
    """
    Window-level confusion counts: a window is an event window if it overlaps any labeled sample.
    """
    counts = {'tp': 0, 'fp': 0, 'fn': 0, 'tn': 0}
    if not report.windows:
        return counts
    starts = report.starts
    first = int(starts[0])
    mask = truth.labeled_mask(int(starts[-1]) + report.size - first, first)
    cumulative = np.concatenate([[0], np.cumsum(mask)])
    labeled = cumulative[starts - first + report.size] > cumulative[starts - first]
    flags = report.flags
    counts['tp'] = int(np.sum(flags & labeled))
    counts['fp'] = int(np.sum(flags & ~labeled))
    counts['fn'] = int(np.sum(~flags & labeled))
    counts['tn'] = int(np.sum(~flags & ~labeled))
    return counts


def evaluate_report(report: DetectionReport, truth: GroundTruth, slack: int = DEFAULT_SLACK):
    """
    :return: (MatchResult, Metrics) for the report's merged intervals
    """
    match = match_events(report.intervals, truth, slack)
    result = metrics(match)
    logger.info('{0}: tp={1} fp={2} fn={3} precision={4:.4f} recall={5:.4f} f1={6:.4f} accuracy={7:.4f}'
                .format(report.source, match.tp, match.fp, match.fn, *result))
    return match, result


def comparison_frame(results: dict) -> pd.DataFrame:
    """
    :param results: detector name -> Metrics, in display order
    """
    return pd.DataFrame([[name, *m] for name, m in results.items()], columns=COMPARISON_COLUMNS)


def per_kind_frame(matches: dict) -> pd.DataFrame:
    """
    :param matches: detector name -> MatchResult
    :return: one row per event kind, one recall column per detector
    """
    table = {name: {kind.value: r for kind, r in per_kind_recall(m).items()} for name, m in matches.items()}
    kinds = [kind.value for kind in EventKind if any(kind.value in t for t in table.values())]
    frame = pd.DataFrame(table, index=kinds)
    frame.index.name = 'kind'
    return frame


def format_summary(comparison: pd.DataFrame, per_kind: pd.DataFrame) -> str:
    return '{0}\n\nRecall per event kind:\n{1}\n'.format(
        comparison.to_string(index=False, float_format='{0:.4f}'.format),
        per_kind.to_string(float_format='{0:.4f}'.format) if not per_kind.empty else '(no events)')
