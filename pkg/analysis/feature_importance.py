"""
Per-room feature importance: filter the queries to one room, train decision
tree CAMs on ``[o, s_1 .. s_K]`` (the room column is constant there) and
average permutation importance over several trials.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from aggregation.aggregators import feature_matrix
from answering.answer_utils import AnswerRecord, HeuristicBackend, HeuristicParams, answer_all
from environment.house_utils import HouseGraph
from exploration.explore_utils import oracle_observations
from learners.base import Dataset
from learners.registry import fit
from queries.query_utils import QuerySet, filter_by_room, train_test_split

from .metrics import MetricError, PfiReport, pfi_report

logger = logging.getLogger(__name__)


def oracle_room_answers(house: HouseGraph, qs: QuerySet, rooms: Sequence[Sequence[int]],
                        params: HeuristicParams) -> List[AnswerRecord]:
    """One heuristic agent per entry of ``rooms``, each knowing exactly those rooms."""
    records = []
    for agent_id, agent_rooms in enumerate(rooms):
        backend = HeuristicBackend(house, oracle_observations(house, agent_rooms), params, agent_id)
        records.append(answer_all(backend, qs))
    return records


@dataclass
class RoomPfiResult:
    room: int
    report: PfiReport
    flagged: List[str]
    answer_share: pd.DataFrame
    models: list = field(default_factory=list)

    @property
    def feature_names(self) -> List[str]:
        return list(self.report.table['feature_name'])


def per_room_pfi_experiment(qs: QuerySet, records: Sequence[AnswerRecord], room: int,
                            trials: int = 5, repeats: int = 5, seed: int = 0,
                            val_fraction: float = 0.3, near_constant: float = 0.9,
                            hyper: Optional[dict] = None) -> RoomPfiResult:
    indices = [i for i, q in enumerate(qs) if q.r == room]
    filtered = filter_by_room(qs, room)
    if not indices:
        raise MetricError(f"no queries for room {room}")

    answers = np.column_stack([[r.answers[i] for i in indices] for r in records])
    X = np.delete(feature_matrix(filtered.queries, answers), 1, axis=1)
    y = filtered.labels
    names = ['object'] + [f'agent_{r.agent_id}' for r in records]

    flagged = []
    shares = []
    for record, column in zip(records, answers.T):
        no_share = float(np.mean(column == 0))
        majority = max(no_share, 1.0 - no_share)
        shares.append({'agent': record.agent_id, 'no_share': no_share, 'majority_share': majority})
        if majority >= near_constant:
            flagged.append(f'agent_{record.agent_id}')
            logger.warning("agent %s answers one class on %.1f%% of room %s queries",
                           record.agent_id, 100 * majority, room)

    tables, bases, models = [], [], []
    for trial in range(trials):
        if len(filtered) >= 2:
            split = train_test_split(filtered, val_fraction, seed + trial).split
            train, val = list(split.train), list(split.test)
        else:
            train = val = [0]
        model = fit('dt', Dataset(X[train], y[train]), hyper, seed=seed + trial)
        report = pfi_report(model, Dataset(X[val], y[val]), names, repeats, seed + trial)
        tables.append(report.table.set_index('feature_name'))
        bases.append(report.base_accuracy)
        models.append(model)

    stacked = pd.concat(tables)
    table = (stacked.groupby(level=0, sort=False)[['pfi_mean', 'pfi_std']].mean()
             .reset_index().rename(columns={'index': 'feature_name'}))
    averaged = PfiReport(table=table, base_accuracy=float(np.mean(bases)), repeats=repeats,
                         seed=seed)
    return RoomPfiResult(room=room, report=averaged, flagged=flagged,
                         answer_share=pd.DataFrame(shares), models=models)
