//! Limit-order-book market with liquidity providers and liquidity takers.
//!
//! One event round:
//! 1. the taker direction `q(t)` takes a mean-reverting step of size `ΔS`
//!    (towards 1/2 with probability `1/2 + |q - 1/2|`), reflecting at 0 and 1;
//! 2. the placement depth is `λ(t) = λ0 (1 + C_λ |q(t) - 1/2|)`;
//! 3. agents act in a random order: each provider places, each with
//!    probability `α`, one limit buy and one limit sell at an exponentially
//!    distributed depth (mean `λ(t)` ticks) behind the opposite best; each
//!    taker sends, with probability `μ`, a unit market order that buys with
//!    probability `q(t)`;
//! 4. every resting order is cancelled with probability `δ`.
//!
//! Orders are unit size. Market orders execute against the best opposite
//! level, oldest order first; against an empty side they are dropped.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgpsConstants {
    pub agents_per_type: usize,
    /// Initial mid-price in ticks.
    pub initial_mid: f64,
    /// Rounds simulated before the first emitted return.
    pub burn_in: usize,
}

impl Default for PgpsConstants {
    fn default() -> Self {
        Self {
            agents_per_type: 125,
            initial_mid: 100_000.0,
            burn_in: 0,
        }
    }
}

/// `[α, μ, δ, ΔS, λ0, C_λ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgpsParams {
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    pub delta_s: f64,
    pub lambda0: f64,
    pub c_lambda: f64,
}

impl PgpsParams {
    pub fn from_slice(theta: &[f64]) -> Self {
        Self {
            alpha: theta[0],
            mu: theta[1],
            delta: theta[2],
            delta_s: theta[3],
            lambda0: theta[4],
            c_lambda: theta[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Order {
    pub id: u64,
    pub owner: u32,
    pub placed_round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bid,
    Ask,
}

/// Price-time priority book of unit orders.
#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<i64, VecDeque<Order>>,
    asks: BTreeMap<i64, VecDeque<Order>>,
    best_bid: Option<i64>,
    best_ask: Option<i64>,
    resting: usize,
}

impl OrderBook {
    pub fn best_bid(&self) -> Option<i64> {
        self.best_bid
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.best_ask
    }

    pub fn len(&self) -> usize {
        self.resting
    }

    pub fn is_empty(&self) -> bool {
        self.resting == 0
    }

    pub fn side_len(&self, side: Side) -> usize {
        let book = match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        };
        book.values().map(VecDeque::len).sum()
    }

    fn refresh_bests(&mut self) {
        self.best_bid = self.bids.keys().next_back().copied();
        self.best_ask = self.asks.keys().next().copied();
    }

    /// Rests a limit order. Callers guarantee it does not cross.
    pub fn insert(&mut self, side: Side, price: i64, order: Order) {
        match side {
            Side::Bid => {
                debug_assert!(self.best_ask.is_none_or(|a| price < a));
                self.bids.entry(price).or_default().push_back(order);
                if self.best_bid.is_none_or(|b| price > b) {
                    self.best_bid = Some(price);
                }
            }
            Side::Ask => {
                debug_assert!(self.best_bid.is_none_or(|b| price > b));
                self.asks.entry(price).or_default().push_back(order);
                if self.best_ask.is_none_or(|a| price < a) {
                    self.best_ask = Some(price);
                }
            }
        }
        self.resting += 1;
    }

    /// Executes a unit market order against the opposite best level.
    /// A buy consumes the oldest order at the lowest ask.
    pub fn market(&mut self, buy: bool) -> Option<i64> {
        let (book, best) = if buy {
            (&mut self.asks, self.best_ask)
        } else {
            (&mut self.bids, self.best_bid)
        };
        let price = best?;
        let level = book.get_mut(&price).expect("cached best level exists");
        level.pop_front();
        if level.is_empty() {
            book.remove(&price);
        }
        self.resting -= 1;
        self.refresh_bests();
        Some(price)
    }

    /// Cancels each resting order independently with probability `p`.
    /// Returns the number cancelled.
    pub fn cancel_each<R: rand::Rng + ?Sized>(&mut self, p: f64, rng: &mut R) -> usize {
        if p <= 0.0 || self.resting == 0 {
            return 0;
        }
        let mut cancelled = 0;
        for book in [&mut self.bids, &mut self.asks] {
            book.retain(|_, level| {
                level.retain(|_| {
                    let gone = rng.random_bool(p.min(1.0));
                    cancelled += gone as usize;
                    !gone
                });
                !level.is_empty()
            });
        }
        self.resting -= cancelled;
        self.refresh_bests();
        cancelled
    }
}

/// Lifetime order accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OrderCounts {
    pub placed: u64,
    pub executed: u64,
    pub cancelled: u64,
    pub dropped_market: u64,
}

#[derive(Debug, Clone)]
pub struct PgpsState {
    pub book: OrderBook,
    /// Taker buy probability.
    pub q: f64,
    pub mid: f64,
    pub round: u64,
    pub counts: OrderCounts,
    next_id: u64,
    agent_order: Vec<u32>,
}

impl PgpsState {
    pub fn new(consts: &PgpsConstants) -> Self {
        let agents = 2 * consts.agents_per_type as u32;
        Self {
            book: OrderBook::default(),
            q: 0.5,
            mid: consts.initial_mid,
            round: 0,
            counts: OrderCounts::default(),
            next_id: 0,
            agent_order: (0..agents).collect(),
        }
    }

    pub fn placement_depth(&self, params: &PgpsParams) -> f64 {
        params.lambda0 * (1.0 + params.c_lambda * (self.q - 0.5).abs())
    }

    fn next_order(&mut self, owner: u32) -> Order {
        self.next_id += 1;
        Order {
            id: self.next_id,
            owner,
            placed_round: self.round,
        }
    }
}

/// One event round. Returns the last trade price of the round, if any.
pub fn pgps_step<R: rand::Rng + ?Sized>(
    state: &mut PgpsState,
    params: &PgpsParams,
    consts: &PgpsConstants,
    rng: &mut R,
) -> Option<i64> {
    state.round += 1;

    // mean-reverting taker direction
    let dev = state.q - 0.5;
    let toward = rng.random_bool((0.5 + dev.abs()).min(1.0));
    let dir = if dev < 0.0 { 1.0 } else { -1.0 };
    let step = if dev == 0.0 {
        if toward {
            params.delta_s
        } else {
            -params.delta_s
        }
    } else if toward {
        dir * params.delta_s
    } else {
        -dir * params.delta_s
    };
    let mut q = state.q + step;
    if q < 0.0 {
        q = -q;
    }
    if q > 1.0 {
        q = 2.0 - q;
    }
    state.q = q.clamp(0.0, 1.0);

    let depth = state.placement_depth(params).max(f64::MIN_POSITIVE);
    let exp = Exp::new(1.0 / depth).expect("positive depth");
    let providers = consts.agents_per_type as u32;

    let mut order = std::mem::take(&mut state.agent_order);
    order.shuffle(rng);
    let mut last_trade = None;
    for &agent in &order {
        if agent < providers {
            if rng.random_bool(params.alpha.clamp(0.0, 1.0)) {
                let reference = state.book.best_ask().unwrap_or_else(|| state.mid.ceil() as i64);
                let offset: f64 = exp.sample(rng);
                let price = (reference - 1 - offset.floor() as i64).max(1);
                if state.book.best_ask().is_none_or(|a| price < a) && price < reference {
                    let o = state.next_order(agent);
                    state.book.insert(Side::Bid, price, o);
                    state.counts.placed += 1;
                }
            }
            if rng.random_bool(params.alpha.clamp(0.0, 1.0)) {
                let reference = state.book.best_bid().unwrap_or_else(|| state.mid.floor() as i64);
                let offset: f64 = exp.sample(rng);
                let price = reference + 1 + offset.floor() as i64;
                let o = state.next_order(agent);
                state.book.insert(Side::Ask, price, o);
                state.counts.placed += 1;
            }
        } else if rng.random_bool(params.mu.clamp(0.0, 1.0)) {
            let buy = rng.random_bool(state.q);
            match state.book.market(buy) {
                Some(p) => {
                    state.counts.executed += 1;
                    last_trade = Some(p);
                }
                None => state.counts.dropped_market += 1,
            }
        }
    }
    state.agent_order = order;

    state.counts.cancelled += state.book.cancel_each(params.delta, rng) as u64;

    if let (Some(b), Some(a)) = (state.book.best_bid(), state.book.best_ask()) {
        state.mid = 0.5 * (b + a) as f64;
    }
    last_trade
}

/// Generates consecutive windows of mid-price log-returns, one per round.
#[derive(Debug, Clone)]
pub struct Pgps {
    state: PgpsState,
    params: PgpsParams,
    consts: PgpsConstants,
    burned_in: bool,
}

impl Pgps {
    pub fn new(theta: &[f64], consts: PgpsConstants) -> Self {
        Self {
            state: PgpsState::new(&consts),
            params: PgpsParams::from_slice(theta),
            consts,
            burned_in: false,
        }
    }

    pub fn state(&self) -> &PgpsState {
        &self.state
    }

    pub fn fill<R: rand::Rng + ?Sized>(&mut self, out: &mut [f64], rng: &mut R) {
        if !self.burned_in {
            for _ in 0..self.consts.burn_in {
                pgps_step(&mut self.state, &self.params, &self.consts, rng);
            }
            self.burned_in = true;
        }
        for slot in out.iter_mut() {
            let before = self.state.mid;
            pgps_step(&mut self.state, &self.params, &self.consts, rng);
            *slot = (self.state.mid / before).ln();
        }
    }
}
