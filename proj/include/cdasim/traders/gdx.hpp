#pragma once

// GDX: a belief q(p) that a shout at price p is accepted, estimated from a
// sliding window of observed shouts, and a finite-horizon dynamic program that
// picks the price maximising expected discounted surplus.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "cdasim/traders/trader.hpp"

namespace cdasim {

struct ShoutRecord {
    Side side = Side::Bid;
    Price price = 0;
    bool accepted = false;
};

struct GdxParams {
    std::size_t window = 30;
    double discount = 0.9;
    int max_horizon = 10;
};

struct GdxState {
    std::deque<ShoutRecord> history;
    GdxParams params;
    int horizon = 1;

    void remember(const ShoutRecord& r) {
        history.push_back(r);
        while (history.size() > params.window) history.pop_front();
    }
};

struct BeliefPoint {
    Price price = 0;
    double q = 0.0;
};

struct GdxChoice {
    Price price = 0;
    double value = 0.0;
};

/// Acceptance belief for a shout at `price` by a trader on `side`.
/// Seller: (accepted asks >= p + bids >= p) / (that + unaccepted asks <= p).
/// Buyer:  (accepted bids <= p + asks <= p) / (that + unaccepted bids >= p).
/// Zero when nothing in the window supports or refutes the price.
template <typename Range>
double gdx_belief(const Range& history, Price price, Side side) {
    std::size_t support = 0;
    std::size_t against = 0;
    for (const ShoutRecord& r : history) {
        if (side == Side::Ask) {
            if (r.side == Side::Ask && r.accepted && r.price >= price) ++support;
            if (r.side == Side::Bid && r.price >= price) ++support;
            if (r.side == Side::Ask && !r.accepted && r.price <= price) ++against;
        } else {
            if (r.side == Side::Bid && r.accepted && r.price <= price) ++support;
            if (r.side == Side::Ask && r.price <= price) ++support;
            if (r.side == Side::Bid && !r.accepted && r.price >= price) ++against;
        }
    }
    if (support + against == 0) return 0.0;
    return static_cast<double>(support) / static_cast<double>(support + against);
}

inline double gdx_belief(const GdxState& state, Price price, Side side) { return gdx_belief(state.history, price, side); }

/// Beliefs at every distinct observed price, ascending.
template <typename Range>
std::vector<BeliefPoint> gdx_belief_grid(const Range& history, Side side) {
    std::vector<Price> prices;
    for (const ShoutRecord& r : history) prices.push_back(r.price);
    std::sort(prices.begin(), prices.end());
    prices.erase(std::unique(prices.begin(), prices.end()), prices.end());
    std::vector<BeliefPoint> grid;
    grid.reserve(prices.size());
    for (Price p : prices) grid.push_back({p, gdx_belief(history, p, side)});
    return grid;
}

/// V(n) = max_p [ q(p) s(p) + (1 - q(p)) discount V(n-1) ], V(0) = 0, over admissible grid
/// prices; returns the maximiser at n = horizon. Ties go to the lower price for sellers
/// and the higher price for buyers. Empty when no grid price is admissible.
inline std::optional<GdxChoice> gdx_plan(std::span<const BeliefPoint> grid, Side side, Price limit, int horizon,
                                         double discount) {
    std::vector<BeliefPoint> candidates;
    for (const auto& g : grid)
        if (respects_limit(side, limit, g.price)) candidates.push_back(g);
    if (candidates.empty()) return std::nullopt;
    // Scan in tie-break preference order so that only strict improvements replace.
    if (side == Side::Bid) std::reverse(candidates.begin(), candidates.end());

    horizon = std::max(horizon, 1);
    double next_value = 0.0;  // V(n-1)
    GdxChoice best;
    for (int n = 1; n <= horizon; ++n) {
        bool have = false;
        for (const auto& c : candidates) {
            const double s = static_cast<double>(surplus(side, limit, c.price));
            const double v = c.q * s + (1.0 - c.q) * discount * next_value;
            if (!have || v > best.value + 1e-12 * std::max(1.0, std::abs(best.value))) {
                best = {c.price, v};
                have = true;
            }
        }
        next_value = best.value;
    }
    return best;
}

/// Decision steps left: remaining assignment refreshes, in [1, max_horizon].
inline int gdx_horizon(double now, double session_end, double issue_interval, int max_horizon) {
    const double steps = std::ceil((session_end - now) / issue_interval);
    if (!(steps >= 1.0)) return 1;
    return static_cast<int>(std::min<double>(steps, max_horizon));
}

inline std::optional<Price> gdx_quote(const TraderState& trader, const GdxState& state) {
    if (!trader.current_order) return std::nullopt;
    const auto& a = *trader.current_order;
    if (state.history.empty()) return a.limit_price;
    auto grid = gdx_belief_grid(state.history, a.side);
    auto choice = gdx_plan(grid, a.side, a.limit_price, state.horizon, state.params.discount);
    if (!choice) return a.limit_price;
    return choice->price;
}

class GdxTrader final : public Trader {
  public:
    GdxTrader(std::string id, Side side, GdxParams params = {}) : Trader(std::move(id), "GDX", side) {
        gdx_.params = params;
    }

    const GdxState& gdx_state() const noexcept { return gdx_; }

  protected:
    void on_assign() override { dirty_ = true; }

    void observe(const MarketEvent& e, const MarketView&, Rng&) override {
        if (e.accepted()) {
            gdx_.remember({Side::Bid, e.price, true});
            gdx_.remember({Side::Ask, e.price, true});
        } else {
            gdx_.remember({e.side, e.price, false});
        }
        dirty_ = true;
    }

    std::optional<Price> quote_price(const MarketView& view, Rng&) override {
        const int h = gdx_horizon(view.time, view.session_end, view.issue_interval, gdx_.params.max_horizon);
        if (h != gdx_.horizon) {
            gdx_.horizon = h;
            dirty_ = true;
        }
        if (dirty_) {
            cached_ = gdx_quote(state(), gdx_);
            dirty_ = false;
        }
        return cached_;
    }

  private:
    GdxState gdx_;
    std::optional<Price> cached_;
    bool dirty_ = true;
};

}  // namespace cdasim
