#pragma once

// Adaptive-aggressive trading: an equilibrium estimate from recent trades, an
// aggressiveness level r in [-1, 1] mapped through a theta-shaped exponential to a
// target price, short-term learning of r from each market event and long-term
// learning of theta from price volatility.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>

#include "cdasim/traders/trader.hpp"

namespace cdasim {

struct AaParams {
    double ema_weight = 0.95;       // per-step decay of older trades in the equilibrium average
    std::size_t window = 30;        // trades kept for the average and for volatility
    double r_init_spread = 0.3;     // r starts ~ U(-spread, spread)
    double theta_init = 2.0;
    double theta_min = -8.0;
    double theta_max = 2.0;
    double short_rate = 0.3;        // beta1, step toward desired r
    double long_rate = 0.05;        // beta2, step toward theta*
    double lambda_r = 0.02;         // relative overshoot of desired r
    double lambda_a = 0.01;         // absolute overshoot of desired r
    double volatility_gamma = 2.0;
    double initial_margin = 0.10;   // pre-trade quotes sit this fraction inside the limit
    double eta = 3.0;               // quote moves 1/eta of the way from the best toward the target
};

struct AaState {
    std::optional<double> equilibrium;
    std::deque<double> recent;  // newest last
    double r = 0.0;
    double theta = 2.0;
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    bool alpha_seen = false;
    double target = 0.0;
    AaParams params;
};

/// (e^{x theta} - 1) / (e^theta - 1) for x in [0, 1]; equals x as theta -> 0.
inline double aa_shape(double x, double theta) {
    if (std::abs(theta) < 1e-9) return x;
    return std::expm1(x * theta) / std::expm1(theta);
}

/// Target price for aggressiveness r. Monotone in r: increasing for buyers, decreasing
/// for sellers. r = 0 targets the equilibrium for intra-marginal traders and the limit for
/// extra-marginal ones; r = -1 reaches the most profitable bound.
inline double aa_target(Side side, double limit, double equilibrium, double r, double theta, PriceBounds bounds) {
    r = std::clamp(r, -1.0, 1.0);
    const double lo = static_cast<double>(bounds.floor);
    const double hi = static_cast<double>(bounds.cap);
    double tau;
    if (side == Side::Bid) {
        if (limit >= equilibrium) {
            if (r < 0.0)
                tau = lo + (equilibrium - lo) * (1.0 - aa_shape(-r, theta));
            else
                tau = equilibrium + (limit - equilibrium) * aa_shape(r, theta);
        } else {
            tau = r < 0.0 ? lo + (limit - lo) * (1.0 - aa_shape(-r, theta)) : limit;
        }
        return std::clamp(tau, std::min(lo, limit), limit);
    }
    if (limit <= equilibrium) {
        if (r < 0.0)
            tau = equilibrium + (hi - equilibrium) * aa_shape(-r, theta);
        else
            tau = limit + (equilibrium - limit) * (1.0 - aa_shape(r, theta));
    } else {
        tau = r < 0.0 ? limit + (hi - limit) * aa_shape(-r, theta) : limit;
    }
    return std::clamp(tau, limit, std::max(hi, limit));
}

/// Aggressiveness whose target equals `price` (bisection over the monotone target map).
inline double aa_r_for_price(Side side, double limit, double equilibrium, double theta, PriceBounds bounds,
                             double price) {
    double lo = -1.0, hi = 1.0;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double tau = aa_target(side, limit, equilibrium, mid, theta, bounds);
        const bool below = side == Side::Bid ? tau < price : tau > price;
        if (below)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline AaState aa_init(Rng& rng, const AaParams& params = {}) {
    AaState s;
    s.params = params;
    s.r = uniform_real(rng, -params.r_init_spread, params.r_init_spread);
    s.theta = params.theta_init;
    return s;
}

/// Newest-weighted moving average over the trade window.
inline double aa_equilibrium(const std::deque<double>& recent, double weight) {
    double num = 0.0, den = 0.0, w = 1.0;
    for (auto it = recent.rbegin(); it != recent.rend(); ++it) {
        num += w * *it;
        den += w;
        w *= weight;
    }
    return num / den;
}

inline void aa_observe_trade_price(AaState& s, double price) {
    s.recent.push_back(price);
    while (s.recent.size() > s.params.window) s.recent.pop_front();
    s.equilibrium = aa_equilibrium(s.recent, s.params.ema_weight);

    // Long-term: volatility of recent trades around the estimate drives theta.
    double ss = 0.0;
    for (double p : s.recent) ss += (p - *s.equilibrium) * (p - *s.equilibrium);
    const double alpha = std::sqrt(ss / static_cast<double>(s.recent.size())) / *s.equilibrium;
    if (!s.alpha_seen) {
        s.alpha_min = s.alpha_max = alpha;
        s.alpha_seen = true;
    } else {
        s.alpha_min = std::min(s.alpha_min, alpha);
        s.alpha_max = std::max(s.alpha_max, alpha);
    }
    const double range = s.alpha_max - s.alpha_min;
    const double a_hat = range > 0.0 ? (alpha - s.alpha_min) / range : 0.5;
    const auto& p = s.params;
    const double theta_star =
        (p.theta_max - p.theta_min) * (1.0 - a_hat * std::exp(p.volatility_gamma * (a_hat - 1.0))) + p.theta_min;
    s.theta = std::clamp(s.theta + p.long_rate * (theta_star - s.theta), p.theta_min, p.theta_max);
}

/// Short- and long-term learning from one market event. `limit` is absent when the
/// trader holds no assignment; the equilibrium estimate still updates.
inline void aa_update(AaState& s, Side side, std::optional<Price> limit, const MarketEvent& e, PriceBounds bounds) {
    if (e.accepted()) aa_observe_trade_price(s, static_cast<double>(e.price));
    if (!limit || !s.equilibrium) return;

    const double lim = static_cast<double>(*limit);
    const double q = static_cast<double>(e.price);
    const auto& p = s.params;
    s.target = aa_target(side, lim, *s.equilibrium, s.r, s.theta, bounds);

    auto more = [&] {
        const double rs = aa_r_for_price(side, lim, *s.equilibrium, s.theta, bounds, q);
        return (1.0 + p.lambda_r) * rs + p.lambda_a;
    };
    auto less = [&] {
        const double rs = aa_r_for_price(side, lim, *s.equilibrium, s.theta, bounds, q);
        return (1.0 - p.lambda_r) * rs - p.lambda_a;
    };

    std::optional<double> desired;
    if (side == Side::Bid) {
        if (e.accepted())
            desired = s.target >= q ? less() : more();
        else if (e.side == Side::Bid && s.target <= q)
            desired = more();
    } else {
        if (e.accepted())
            desired = s.target <= q ? less() : more();
        else if (e.side == Side::Ask && s.target >= q)
            desired = more();
    }
    if (desired) s.r = std::clamp(s.r + p.short_rate * (*desired - s.r), -1.0, 1.0);
    s.target = aa_target(side, lim, *s.equilibrium, s.r, s.theta, bounds);
}

/// Quote price. Before any trade: limit shifted inward by the initial margin. After:
/// take the opposite best if it already satisfies the target, otherwise step 1/eta of
/// the way from the own-side best (or bound) toward the target.
inline std::optional<Price> aa_quote(const TraderState& trader, const AaState& s, const LobSummary& book,
                                     PriceBounds bounds) {
    if (!trader.current_order) return std::nullopt;
    const auto& a = *trader.current_order;
    const double lim = static_cast<double>(a.limit_price);
    double price;
    if (!s.equilibrium) {
        price = a.side == Side::Bid ? lim * (1.0 - s.params.initial_margin) : lim * (1.0 + s.params.initial_margin);
    } else {
        const double tau = aa_target(a.side, lim, *s.equilibrium, s.r, s.theta, bounds);
        if (a.side == Side::Bid) {
            if (book.best_ask && static_cast<double>(*book.best_ask) <= tau) {
                price = static_cast<double>(*book.best_ask);
            } else {
                const double ob = book.best_bid ? static_cast<double>(*book.best_bid) : static_cast<double>(bounds.floor);
                price = ob + (tau - ob) / s.params.eta;
            }
        } else {
            if (book.best_bid && static_cast<double>(*book.best_bid) >= tau) {
                price = static_cast<double>(*book.best_bid);
            } else {
                const double oa = book.best_ask ? static_cast<double>(*book.best_ask) : static_cast<double>(bounds.cap);
                price = oa - (oa - tau) / s.params.eta;
            }
        }
    }
    auto p = static_cast<Price>(std::llround(price));
    if (a.side == Side::Bid) return std::clamp(p, std::min(bounds.floor, a.limit_price), a.limit_price);
    return std::clamp(p, a.limit_price, std::max(bounds.cap, a.limit_price));
}

class AaTrader final : public Trader {
  public:
    AaTrader(std::string id, Side side, Rng& init_rng, const AaParams& params = {})
        : Trader(std::move(id), "AA", side), aa_(aa_init(init_rng, params)) {}

    const AaState& aa_state() const noexcept { return aa_; }

  protected:
    void observe(const MarketEvent& e, const MarketView& view, Rng&) override {
        std::optional<Price> limit;
        if (assignment()) limit = assignment()->limit_price;
        aa_update(aa_, side(), limit, e, view.bounds);
    }

    std::optional<Price> quote_price(const MarketView& view, Rng&) override {
        return aa_quote(state(), aa_, view.summary, view.bounds);
    }

  private:
    AaState aa_;
};

}  // namespace cdasim
