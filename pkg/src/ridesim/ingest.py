"""Trip log ingestion.

Log schema (delimiter-separated text, fixed column order):

    driver_id, trip_id, created_time, assigned_time, decision_time,
    pickup_time, pickup_lat, pickup_lon, drop_lat, drop_lon,
    pickup_distance_km, trip_distance_km, status, payment_method

Timestamps are ISO-8601 UTC at minute precision (2026-02-02T06:30).
pickup_time may be empty for trips that never reached a pickup. status is
one of accepted, rejected, completed, cancelled. Lines starting with '#'
are metadata and skipped.

Parsing is strict per row and collects unusable rows into a rejects list
instead of failing the file. Cleaning then removes duplicate trip ids,
records with missing or inconsistent required values, and pickups outside
the service region, counting each removal under its first matching reason.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from .ridegen import GridSpec
from .sim import (Action, PlatformParams, Trajectory, Transition,
                  reward_for_features, travel_minutes, weekly_goal)

LOG_COLUMNS = ["driver_id", "trip_id", "created_time", "assigned_time",
               "decision_time", "pickup_time", "pickup_lat", "pickup_lon",
               "drop_lat", "drop_lon", "pickup_distance_km",
               "trip_distance_km", "status", "payment_method"]

STATUSES = ("accepted", "rejected", "completed", "cancelled")

REJECT_COLUMNS = ["row_number", "reason"]

TIME_FORMAT = "%Y-%m-%dT%H:%M"


def format_minute(t: datetime) -> str:
    return t.strftime(TIME_FORMAT)


def parse_minute(text: str) -> datetime:
    for fmt in (TIME_FORMAT, "%Y-%m-%dT%H:%M:%S"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"bad timestamp {text!r}")


@dataclass
class TripRecord:
    driver_id: str
    trip_id: str
    created_time: datetime
    assigned_time: datetime
    decision_time: datetime
    pickup_time: datetime | None
    pickup_lat: float
    pickup_lon: float
    drop_lat: float
    drop_lon: float
    pickup_distance_km: float
    trip_distance_km: float
    status: str
    payment_method: str

    def accepted(self) -> bool:
        """The driver said yes, whatever happened to the trip afterwards."""
        return self.status != "rejected"

    def issues(self) -> list:
        """Required-value problems that parsing alone cannot reject."""
        problems = []
        if self.status == "completed" and self.pickup_time is None:
            problems.append("completed trip without pickup_time")
        if not (self.created_time <= self.assigned_time <= self.decision_time):
            problems.append("timestamps out of order")
        return problems


@dataclass(frozen=True)
class RejectedRow:
    row_number: int
    reason: str


@dataclass
class CleaningReport:
    input_count: int = 0
    duplicate_count: int = 0
    missing_field_count: int = 0
    out_of_region_count: int = 0
    retained_count: int = 0

    def reconciles(self) -> bool:
        return (self.retained_count == self.input_count - self.duplicate_count
                - self.missing_field_count - self.out_of_region_count)

    def to_lines(self) -> list:
        return [f"input {self.input_count}",
                f"duplicates {self.duplicate_count}",
                f"missing_or_inconsistent {self.missing_field_count}",
                f"out_of_region {self.out_of_region_count}",
                f"retained {self.retained_count}"]


def _parse_row(row: Sequence[str]) -> TripRecord:
    if len(row) != len(LOG_COLUMNS):
        raise ValueError(f"expected {len(LOG_COLUMNS)} columns, got {len(row)}")
    vals = [v.strip() for v in row]
    named = dict(zip(LOG_COLUMNS, vals))
    for key in ("driver_id", "trip_id", "payment_method"):
        if not named[key]:
            raise ValueError(f"missing {key}")
    times = {}
    for key in ("created_time", "assigned_time", "decision_time"):
        try:
            times[key] = parse_minute(named[key])
        except ValueError:
            raise ValueError(f"bad {key} {named[key]!r}")
    pickup_time = None
    if named["pickup_time"]:
        try:
            pickup_time = parse_minute(named["pickup_time"])
        except ValueError:
            raise ValueError(f"bad pickup_time {named['pickup_time']!r}")
    floats = {}
    for key in ("pickup_lat", "pickup_lon", "drop_lat", "drop_lon",
                "pickup_distance_km", "trip_distance_km"):
        try:
            floats[key] = float(named[key])
        except ValueError:
            raise ValueError(f"non-numeric {key} {named[key]!r}")
        if not math.isfinite(floats[key]):
            raise ValueError(f"non-finite {key}")
    for key in ("pickup_distance_km", "trip_distance_km"):
        if floats[key] < 0:
            raise ValueError(f"negative {key}")
    if named["status"] not in STATUSES:
        raise ValueError(f"unknown status {named['status']!r}")
    return TripRecord(driver_id=named["driver_id"], trip_id=named["trip_id"],
                      created_time=times["created_time"],
                      assigned_time=times["assigned_time"],
                      decision_time=times["decision_time"],
                      pickup_time=pickup_time,
                      pickup_lat=floats["pickup_lat"],
                      pickup_lon=floats["pickup_lon"],
                      drop_lat=floats["drop_lat"],
                      drop_lon=floats["drop_lon"],
                      pickup_distance_km=floats["pickup_distance_km"],
                      trip_distance_km=floats["trip_distance_km"],
                      status=named["status"],
                      payment_method=named["payment_method"])


def parse_trip_log(lines: Iterable[str]) -> tuple[list, list]:
    """Parse log lines into (records, rejects).

    The header row must match the schema exactly; a missing or wrong header
    fails the whole file. Data rows that cannot be parsed become RejectedRow
    entries numbered from 1 in data-row order.
    """
    reader = csv.reader(ln for ln in lines
                        if ln.strip() and not ln.lstrip().startswith("#"))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty trip log")
    if [h.strip() for h in header] != LOG_COLUMNS:
        raise ValueError("trip log header does not match the expected schema")
    records, rejects = [], []
    for number, row in enumerate(reader, start=1):
        try:
            records.append(_parse_row(row))
        except ValueError as exc:
            rejects.append(RejectedRow(row_number=number, reason=str(exc)))
    return records, rejects


def read_trip_log(path) -> tuple[list, list]:
    with open(path) as fh:
        return parse_trip_log(fh)


def clean(records: Sequence[TripRecord],
          region: tuple[float, float, float, float]) -> tuple[list, CleaningReport]:
    """Drop duplicates, inconsistent records and out-of-region pickups.

    region is (min_lat, min_lon, max_lat, max_lon), bounds inclusive. Each
    removed record counts under exactly one reason, checked in the order
    duplicate, missing value, out of region. Keeps first occurrence per
    trip_id. Cleaning already-clean records removes nothing.
    """
    min_lat, min_lon, max_lat, max_lon = region
    report = CleaningReport(input_count=len(records))
    seen = set()
    kept = []
    for rec in records:
        if rec.trip_id in seen:
            report.duplicate_count += 1
            continue
        seen.add(rec.trip_id)
        if rec.issues():
            report.missing_field_count += 1
            continue
        if not (min_lat <= rec.pickup_lat <= max_lat
                and min_lon <= rec.pickup_lon <= max_lon):
            report.out_of_region_count += 1
            continue
        kept.append(rec)
    report.retained_count = len(kept)
    return kept, report


def record_to_row(rec: TripRecord) -> list:
    return [rec.driver_id, rec.trip_id,
            format_minute(rec.created_time),
            format_minute(rec.assigned_time),
            format_minute(rec.decision_time),
            format_minute(rec.pickup_time) if rec.pickup_time else "",
            f"{rec.pickup_lat:.6f}", f"{rec.pickup_lon:.6f}",
            f"{rec.drop_lat:.6f}", f"{rec.drop_lon:.6f}",
            f"{rec.pickup_distance_km:.6f}", f"{rec.trip_distance_km:.6f}",
            rec.status, rec.payment_method]


def log_span(records: Sequence[TripRecord]) -> tuple[datetime, datetime]:
    """(first, last) created_time over the records."""
    if not records:
        raise ValueError("no records")
    times = [r.created_time for r in records]
    return min(times), max(times)


def window_records(records: Sequence[TripRecord], window) -> list:
    if window is None:
        return list(records)
    start, end = window
    return [r for r in records if start <= r.created_time < end]


def training_window(records: Sequence[TripRecord],
                    holdout_days: int = 7) -> tuple[tuple, tuple]:
    """Split the log span into (training, holdout) half-open windows.

    Both windows are aligned to midnight of the first record's date so that
    week bookkeeping starts at a day boundary; the holdout covers the final
    `holdout_days` calendar days.
    """
    first, last = log_span(records)
    start = datetime.combine(first.date(), datetime.min.time())
    end = datetime.combine(last.date(), datetime.min.time()) + timedelta(days=1)
    split = end - timedelta(days=holdout_days)
    if split <= start:
        raise ValueError("log too short to hold out "
                         f"{holdout_days} days")
    return (start, split), (split, end)


def driver_weekly_averages(records: Sequence[TripRecord]) -> dict:
    """Mean completed trips per week for each driver over the record span.

    Used to seed simulated drivers' prior-week counts so weekly goals start
    from demonstrated behavior.
    """
    if not records:
        return {}
    start, end = log_span(records)
    weeks = max(1.0, ((end - start).days + 1) / 7.0)
    counts: dict = {}
    for rec in records:
        counts.setdefault(rec.driver_id, 0)
        if rec.status == "completed":
            counts[rec.driver_id] += 1
    return {driver: count / weeks for driver, count in sorted(counts.items())}


def extract_demonstrations(records: Sequence[TripRecord],
                           params: PlatformParams,
                           grid: GridSpec,
                           window=None,
                           speed_kmh: float = 30.0) -> list:
    """Rebuild per-driver decision trajectories from a cleaned log.

    Offers are replayed per driver in time order. Observations come from
    the logged distances, timestamps and drop coordinates plus running
    weekly-goal and idle bookkeeping; rewards are recomputed from the same
    economics the simulator uses. Completion times are estimated as pickup
    time plus trip travel time at the constant speed, which is what feeds
    the idle-gap feature of the following offer. Each trajectory ends in a
    terminal transition.
    """
    selected = window_records(records, window)
    if not selected:
        raise ValueError("no records in the demonstration window")
    if window is not None:
        reference = window[0]
    else:
        reference = min(r.created_time for r in selected)

    by_driver: dict = {}
    for rec in selected:
        by_driver.setdefault(rec.driver_id, []).append(rec)

    cx, cy = grid.center()
    trajectories = []
    for driver_id in sorted(by_driver):
        rows = sorted(by_driver[driver_id],
                      key=lambda r: (r.created_time, r.trip_id))
        goal = weekly_goal(params.default_weekly_goal,
                           params.weekly_target_multiplier)
        completed = 0
        week = 0
        last_completion = reference
        chain = []  # (obs, action, reward)
        for rec in rows:
            offer_week = (rec.created_time - reference).days // 7
            while week < offer_week:
                week += 1
                goal = weekly_goal(completed, params.weekly_target_multiplier)
                completed = 0
            drop_x, drop_y = grid.to_xy(rec.drop_lat, rec.drop_lon)
            idle = max(0, int((rec.created_time - last_completion)
                              .total_seconds() // 60))
            trips_to_goal = max(0, goal - completed)
            obs = np.array([rec.pickup_distance_km,
                            rec.trip_distance_km,
                            float(rec.created_time.hour * 60
                                  + rec.created_time.minute),
                            float(trips_to_goal),
                            math.hypot(drop_x - cx, drop_y - cy),
                            float(idle)], dtype=float)
            action = Action.ACCEPT if rec.accepted() else Action.REJECT
            reward = reward_for_features(
                params,
                pickup_km=rec.pickup_distance_km,
                trip_km=rec.trip_distance_km,
                minute_of_day=int(obs[2]),
                trips_to_goal=trips_to_goal,
                idle_minutes=float(idle),
                goal_trips=goal,
                action=action)
            chain.append((obs, action, reward))
            if rec.status == "completed" and rec.pickup_time is not None:
                minutes = travel_minutes(rec.trip_distance_km, speed_kmh)
                last_completion = rec.pickup_time + timedelta(minutes=minutes)
                completed += 1
        transitions = []
        for i, (obs, action, reward) in enumerate(chain):
            if i + 1 < len(chain):
                transitions.append(Transition(obs=obs, action=action,
                                              next_obs=chain[i + 1][0],
                                              reward=reward))
            else:
                transitions.append(Transition(obs=obs, action=action,
                                              next_obs=obs, reward=reward,
                                              terminal=True))
        trajectories.append(Trajectory(driver_id=driver_id,
                                       transitions=transitions))
    return trajectories
