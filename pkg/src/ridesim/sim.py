"""Discrete-event marketplace simulation on a minute clock.

One episode covers a whole number of weeks. Every minute the demand profile
emits new rides, each ride is offered to idle drivers nearest-first until one
accepts or the offer budget runs out, and busy drivers progress toward their
drop points at a constant speed. Each offer produces an observation, an
accept/reject decision, a scalar reward and, chained with the driver's next
offer, a transition for learning.

Observations are raw engineering units (km, minutes); consumers apply their
own normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .distributions import TimeProfile, probabilistic_round
from .ridegen import GridSpec, Ride, generate_rides
from .distributions import EmpiricalDistribution, inverse_sample

MINUTES_PER_DAY = 1440
MINUTES_PER_WEEK = 7 * MINUTES_PER_DAY

# Observation vector layout (fixed order, raw units).
OBS_DIM = 6
F_PICKUP_KM = 0       # driver to pickup point, km
F_TRIP_KM = 1         # pickup to drop, km
F_MINUTE_OF_DAY = 2   # 0..1439
F_TRIPS_TO_GOAL = 3   # remaining trips until the weekly bonus, >= 0
F_DROP_CENTER_KM = 4  # drop point's distance from the grid center, km
F_IDLE_MINUTES = 5    # minutes since the driver's last completed trip


class Action(IntEnum):
    REJECT = 0
    ACCEPT = 1


class DriverStatus(IntEnum):
    IDLE = 0
    TO_PICKUP = 1
    ON_TRIP = 2


@dataclass
class PlatformParams:
    """Economic constants of the marketplace.

    Peak hour ranges are half-open [start, end) clock hours. The weekly
    bonus amount is amortized per goal-progressing trip as amount/goal.
    """

    fare_per_km: float = 100.0
    cost_per_km: float = 30.0
    peak_hours: tuple = ((6, 8), (16, 19))
    peak_fare_multiplier: float = 2.0
    weekly_reward_amount: float = 2000.0
    weekly_target_multiplier: float = 1.0
    fare_weight: float = 1.0
    cost_weight: float = 1.0
    idle_cost_weight: float = 1.0
    bonus_weight: float = 1.0
    idle_cost_per_minute: float = 1.0
    default_weekly_goal: int = 40

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not math.isfinite(self.fare_per_km) or self.fare_per_km < 0:
            raise ValueError("fare_per_km must be non-negative")
        if not math.isfinite(self.cost_per_km) or self.cost_per_km < 0:
            raise ValueError("cost_per_km must be non-negative")
        if self.peak_fare_multiplier < 0:
            raise ValueError("peak_fare_multiplier must be non-negative")
        if self.weekly_target_multiplier <= 0:
            raise ValueError("weekly_target_multiplier must be positive")
        if self.weekly_reward_amount < 0:
            raise ValueError("weekly_reward_amount must be non-negative")
        if self.idle_cost_per_minute < 0:
            raise ValueError("idle_cost_per_minute must be non-negative")
        if self.default_weekly_goal < 1:
            raise ValueError("default_weekly_goal must be at least 1")
        for rng_pair in self.peak_hours:
            s, e = rng_pair
            if not (0 <= s < e <= 24):
                raise ValueError(f"bad peak hour range {rng_pair!r}")
        for name in ("fare_weight", "cost_weight", "idle_cost_weight", "bonus_weight"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def is_peak(self, minute_of_day: int) -> bool:
        hour = (minute_of_day // 60) % 24
        return any(s <= hour < e for s, e in self.peak_hours)

    def effective_fare(self, minute_of_day: int) -> float:
        if self.is_peak(minute_of_day):
            return self.fare_per_km * self.peak_fare_multiplier
        return self.fare_per_km


def weekly_goal(last_week_trips: int, multiplier: float) -> int:
    """Next week's trip goal: last week's count scaled, half-up, at least 1."""
    return max(1, int(math.floor(last_week_trips * multiplier + 0.5)))


@dataclass
class DriverState:
    driver_id: int
    x: float
    y: float
    status: DriverStatus = DriverStatus.IDLE
    busy_until: int = 0
    pickup_eta: int = 0
    dest_x: float = 0.0
    dest_y: float = 0.0
    idle_since: int = 0
    trips_completed_week: int = 0
    weekly_goal_trips: int = 1
    last_week_trips: int = 0

    def trips_to_goal(self) -> int:
        return max(0, self.weekly_goal_trips - self.trips_completed_week)


def travel_minutes(distance_km: float, speed_kmh: float) -> int:
    """Whole minutes to cover the distance, rounded up, at least 1."""
    if distance_km < 0:
        raise ValueError("distance must be non-negative")
    if speed_kmh <= 0:
        raise ValueError("speed must be positive")
    # Multiply before dividing and shave an epsilon so exact multiples of a
    # minute do not round up an extra minute through float error.
    raw = distance_km * 60.0 / speed_kmh
    return max(1, int(math.ceil(raw - 1e-9)))


def make_observation(driver: DriverState, ride: Ride, clock: int,
                     grid: GridSpec) -> np.ndarray:
    """Six-feature offer observation in raw units (see F_* layout)."""
    pickup_km = math.hypot(driver.x - ride.pickup_x, driver.y - ride.pickup_y)
    cx, cy = grid.center()
    drop_center_km = math.hypot(ride.drop_x - cx, ride.drop_y - cy)
    idle = max(0, clock - driver.idle_since)
    return np.array([pickup_km,
                     ride.distance_km,
                     float(clock % MINUTES_PER_DAY),
                     float(driver.trips_to_goal()),
                     drop_center_km,
                     float(idle)], dtype=float)


def reward_for_features(params: PlatformParams, *, pickup_km: float,
                        trip_km: float, minute_of_day: int,
                        trips_to_goal: int, idle_minutes: float,
                        goal_trips: int, action: Action) -> float:
    """Scalar reward of one accept/reject decision.

    Accepting earns the (peak-adjusted) fare over the trip distance, pays the
    driving cost over pickup plus trip distance, pays the opportunity cost of
    the idle minutes that preceded the offer, and collects the amortized
    weekly bonus when the trip still progresses an unmet goal. Rejecting is
    worth exactly zero.
    """
    if action == Action.REJECT:
        return 0.0
    earnings = params.fare_weight * (params.effective_fare(minute_of_day) * trip_km)
    travel_cost = params.cost_weight * (params.cost_per_km * (trip_km + pickup_km))
    idle_cost = params.idle_cost_weight * (idle_minutes * params.idle_cost_per_minute)
    bonus = 0.0
    if trips_to_goal > 0 and goal_trips > 0:
        bonus = params.bonus_weight * (params.weekly_reward_amount / goal_trips)
    return earnings - travel_cost - idle_cost + bonus


def reward_from_observation(params: PlatformParams, obs: np.ndarray,
                            goal_trips: int, action: Action) -> float:
    """Recompute the reward of a stored observation. Exact re-application."""
    return reward_for_features(
        params,
        pickup_km=float(obs[F_PICKUP_KM]),
        trip_km=float(obs[F_TRIP_KM]),
        minute_of_day=int(obs[F_MINUTE_OF_DAY]),
        trips_to_goal=int(obs[F_TRIPS_TO_GOAL]),
        idle_minutes=float(obs[F_IDLE_MINUTES]),
        goal_trips=goal_trips,
        action=action)


def compute_reward(params: PlatformParams, ride: Ride, driver: DriverState,
                   action: Action, clock: int) -> float:
    pickup_km = math.hypot(driver.x - ride.pickup_x, driver.y - ride.pickup_y)
    return reward_for_features(
        params,
        pickup_km=pickup_km,
        trip_km=ride.distance_km,
        minute_of_day=clock % MINUTES_PER_DAY,
        trips_to_goal=driver.trips_to_goal(),
        idle_minutes=max(0, clock - driver.idle_since),
        goal_trips=driver.weekly_goal_trips,
        action=action)


def assign_ride(driver: DriverState, ride: Ride, now: int, speed_kmh: float) -> None:
    """Commit an accepted ride: driver goes busy until pickup plus trip end."""
    pickup_km = math.hypot(driver.x - ride.pickup_x, driver.y - ride.pickup_y)
    total = travel_minutes(pickup_km + ride.distance_km, speed_kmh)
    driver.busy_until = now + total
    driver.pickup_eta = min(now + travel_minutes(pickup_km, speed_kmh),
                            driver.busy_until)
    driver.dest_x = ride.drop_x
    driver.dest_y = ride.drop_y
    driver.status = DriverStatus.TO_PICKUP


def advance(driver: DriverState, now: int) -> bool:
    """Progress a busy driver's phase at the given minute.

    Returns True when the driver completed a trip at this call. Completion
    snaps the driver to the drop point and restarts the idle counter at the
    completion minute, so idle gaps measure from the actual trip end.
    """
    if driver.status == DriverStatus.IDLE:
        return False
    if now >= driver.busy_until:
        driver.x = driver.dest_x
        driver.y = driver.dest_y
        driver.status = DriverStatus.IDLE
        driver.idle_since = driver.busy_until
        driver.trips_completed_week += 1
        return True
    if driver.status == DriverStatus.TO_PICKUP and now >= driver.pickup_eta:
        driver.status = DriverStatus.ON_TRIP
    return False


@dataclass
class Transition:
    obs: np.ndarray
    action: Action
    next_obs: np.ndarray
    reward: float
    terminal: bool = False


@dataclass
class Trajectory:
    driver_id: object
    transitions: list = field(default_factory=list)


@dataclass(frozen=True)
class OfferRecord:
    minute: int
    driver_id: int
    obs: np.ndarray
    action: Action
    reward: float
    goal_trips: int
    ride: Ride


OFFER_COLUMNS = ["minute", "driver_id", "pickup_km", "trip_km", "minute_of_day",
                 "trips_to_goal", "drop_center_km", "idle_minutes", "action",
                 "reward"]


def offer_to_row(o: OfferRecord) -> list[str]:
    return [str(o.minute), str(o.driver_id),
            f"{o.obs[F_PICKUP_KM]:.6f}", f"{o.obs[F_TRIP_KM]:.6f}",
            str(int(o.obs[F_MINUTE_OF_DAY])), str(int(o.obs[F_TRIPS_TO_GOAL])),
            f"{o.obs[F_DROP_CENTER_KM]:.6f}", str(int(o.obs[F_IDLE_MINUTES])),
            o.action.name.lower(), f"{o.reward:.6f}"]


@dataclass
class EpisodeLog:
    weeks: int
    start_dow: int
    offers: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)
    daily_generated: list = field(default_factory=list)
    daily_assigned: list = field(default_factory=list)
    daily_lost: list = field(default_factory=list)
    completed_trips: int = 0
    total_reward: float = 0.0

    @property
    def generated_total(self) -> int:
        return sum(self.daily_generated)

    @property
    def assigned_total(self) -> int:
        return sum(self.daily_assigned)

    @property
    def lost_total(self) -> int:
        return sum(self.daily_lost)

    def acceptance_rate(self) -> float:
        if not self.offers:
            return float("nan")
        accepted = sum(1 for o in self.offers if o.action == Action.ACCEPT)
        return accepted / len(self.offers)


@dataclass
class SimConfig:
    grid: GridSpec
    params: PlatformParams
    pickup_x_dist: EmpiricalDistribution
    pickup_y_dist: EmpiricalDistribution
    trip_distance_dist: EmpiricalDistribution
    time_profile: TimeProfile
    driver_count: int = 50
    weeks: int = 1
    max_offers: int = 5
    speed_kmh: float = 30.0
    start_dow: int = 0  # 0 = Monday
    initial_weekly_trips: object = None  # int or per-driver sequence; None uses the params default

    def __post_init__(self):
        if self.driver_count < 1:
            raise ValueError("driver_count must be at least 1")
        if self.weeks < 1:
            raise ValueError("weeks must be at least 1")
        if self.max_offers < 1:
            raise ValueError("max_offers must be at least 1")
        if self.speed_kmh <= 0:
            raise ValueError("speed_kmh must be positive")
        if not (0 <= self.start_dow < 7):
            raise ValueError("start_dow must be in 0..6")

    def initial_trips_for(self, index: int) -> int:
        base = self.initial_weekly_trips
        if base is None:
            base = self.params.default_weekly_goal
        if isinstance(base, (int, float)):
            return int(base)
        seq = list(base)
        return int(seq[index % len(seq)])


def dispatch(ride: Ride, drivers: Sequence[DriverState], agent,
             config: SimConfig, clock: int,
             rng: np.random.Generator) -> tuple[list[OfferRecord], DriverState | None]:
    """Offer one ride to idle drivers nearest-first until someone accepts.

    At most config.max_offers drivers are polled; every polled driver yields
    an OfferRecord whether they accepted or not. Returns the records and the
    assigned driver, or None when the ride goes unserved.
    """
    idle = [d for d in drivers if d.status == DriverStatus.IDLE]
    idle.sort(key=lambda d: (math.hypot(d.x - ride.pickup_x, d.y - ride.pickup_y),
                             d.driver_id))
    records = []
    assigned = None
    for driver in idle[:config.max_offers]:
        obs = make_observation(driver, ride, clock, config.grid)
        action = agent.act(obs, rng)
        reward = reward_from_observation(config.params, obs,
                                         driver.weekly_goal_trips, action)
        records.append(OfferRecord(minute=clock, driver_id=driver.driver_id,
                                   obs=obs, action=action, reward=reward,
                                   goal_trips=driver.weekly_goal_trips,
                                   ride=ride))
        if action == Action.ACCEPT:
            assign_ride(driver, ride, clock, config.speed_kmh)
            assigned = driver
            break
    return records, assigned


def run_episode(config: SimConfig, agent, rng: np.random.Generator) -> EpisodeLog:
    """Simulate config.weeks weeks and return the full episode log.

    Weekly goals are fixed at episode start from each driver's prior week
    count times the target multiplier and refreshed at week boundaries from
    the trips actually completed. Unserved rides are lost; they never
    re-enter the queue.
    """
    drivers = []
    for i in range(config.driver_count):
        x = min(max(inverse_sample(config.pickup_x_dist, rng.random()), 0.0),
                config.grid.width_km)
        y = min(max(inverse_sample(config.pickup_y_dist, rng.random()), 0.0),
                config.grid.height_km)
        last = config.initial_trips_for(i)
        d = DriverState(driver_id=i, x=x, y=y, last_week_trips=last)
        d.weekly_goal_trips = weekly_goal(last, config.params.weekly_target_multiplier)
        drivers.append(d)

    total_minutes = config.weeks * MINUTES_PER_WEEK
    days = config.weeks * 7
    log = EpisodeLog(weeks=config.weeks, start_dow=config.start_dow,
                     daily_generated=[0] * days, daily_assigned=[0] * days,
                     daily_lost=[0] * days)
    # Per-driver open transition awaiting the next observation.
    pending: dict[int, tuple] = {}
    chains: dict[int, Trajectory] = {d.driver_id: Trajectory(d.driver_id)
                                     for d in drivers}

    for minute in range(total_minutes):
        if minute > 0 and minute % MINUTES_PER_WEEK == 0:
            for d in drivers:
                d.last_week_trips = d.trips_completed_week
                d.trips_completed_week = 0
                d.weekly_goal_trips = weekly_goal(
                    d.last_week_trips, config.params.weekly_target_multiplier)
        for d in drivers:
            if d.status != DriverStatus.IDLE and advance(d, minute):
                log.completed_trips += 1
        day = minute // MINUTES_PER_DAY
        dow = (config.start_dow + day) % 7
        mean = config.time_profile.means[dow][minute % MINUTES_PER_DAY]
        count = probabilistic_round(float(mean), rng)
        if count == 0:
            continue
        rides = generate_rides(config.grid, config.pickup_x_dist,
                               config.pickup_y_dist, config.trip_distance_dist,
                               count, minute, rng)
        log.daily_generated[day] += count
        for ride in rides:
            records, assigned = dispatch(ride, drivers, agent, config, minute, rng)
            log.offers.extend(records)
            for rec in records:
                log.total_reward += rec.reward
                prev = pending.get(rec.driver_id)
                if prev is not None:
                    chains[rec.driver_id].transitions.append(
                        Transition(obs=prev[0], action=prev[1],
                                   next_obs=rec.obs, reward=prev[2]))
                pending[rec.driver_id] = (rec.obs, rec.action, rec.reward)
            if assigned is None:
                log.daily_lost[day] += 1
            else:
                log.daily_assigned[day] += 1

    for driver_id, prev in pending.items():
        chains[driver_id].transitions.append(
            Transition(obs=prev[0], action=prev[1], next_obs=prev[0],
                       reward=prev[2], terminal=True))
    log.trajectories = {k: v for k, v in chains.items() if v.transitions}
    return log
