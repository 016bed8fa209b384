#pragma once

// Zero-intelligence-plus: a limit price plus an adaptive profit margin, trained
// by a Widrow-Hoff rule with momentum on observed shouts and trades.

#include <algorithm>
#include <cmath>

#include "cdasim/traders/trader.hpp"

namespace cdasim {

struct ZipState {
    double margin = 0.0;      // buyers in [-1, 0], sellers >= 0
    double beta = 0.3;        // learning rate
    double momentum = 0.05;   // gamma
    double last_change = 0.0;
    double target = 0.0;      // most recent target price

    bool operator==(const ZipState&) const = default;
};

struct ZipConstants {
    double beta_lo = 0.1, beta_hi = 0.5;
    double momentum_lo = 0.0, momentum_hi = 0.1;
    double margin_lo = 0.05, margin_hi = 0.35;
    double r_spread = 0.05;  // R ~ U(1, 1 + r_spread) when raising, U(1 - r_spread, 1) when lowering
    double a_fraction = 0.05;  // A ~ U(0, a_fraction * price)
};

inline ZipState zip_init(Side side, Rng& rng, const ZipConstants& k = {}) {
    ZipState z;
    z.beta = uniform_real(rng, k.beta_lo, k.beta_hi);
    z.momentum = uniform_real(rng, k.momentum_lo, k.momentum_hi);
    const double m = uniform_real(rng, k.margin_lo, k.margin_hi);
    z.margin = side == Side::Bid ? -m : m;
    return z;
}

inline double zip_clamp_margin(double margin, Side side) {
    return side == Side::Bid ? std::clamp(margin, -1.0, 0.0) : std::max(margin, 0.0);
}

inline double zip_price(const ZipState& z, double limit) { return limit * (1.0 + z.margin); }

inline std::optional<Price> zip_quote(const TraderState& state, const ZipState& z) {
    if (!state.current_order) return std::nullopt;
    const auto& a = *state.current_order;
    auto p = static_cast<Price>(std::llround(zip_price(z, static_cast<double>(a.limit_price))));
    return a.side == Side::Bid ? std::min(p, a.limit_price) : std::max(p, a.limit_price);
}

/// One Widrow-Hoff step with momentum moving the quote price toward `target`.
inline void zip_step_toward(ZipState& z, Side side, double limit, double target) {
    const double price = zip_price(z, limit);
    const double delta = z.beta * (target - price);
    const double change = z.momentum * z.last_change + (1.0 - z.momentum) * delta;
    z.last_change = change;
    z.target = target;
    z.margin = zip_clamp_margin((price + change) / limit - 1.0, side);
}

/// Cliff's rules. Only an active trader (one holding an assignment) adapts.
inline void zip_update(ZipState& z, Side side, Price limit, const MarketEvent& e, Rng& rng,
                       const ZipConstants& k = {}) {
    const double lim = static_cast<double>(limit);
    const double q = static_cast<double>(e.price);
    const double price = zip_price(z, lim);
    auto higher = [&] {
        return uniform_real(rng, 1.0, 1.0 + k.r_spread) * q + uniform_real(rng, 0.0, k.a_fraction * q);
    };
    auto lower = [&] {
        return uniform_real(rng, 1.0 - k.r_spread, 1.0) * q - uniform_real(rng, 0.0, k.a_fraction * q);
    };

    if (side == Side::Ask) {
        if (e.accepted()) {
            if (price <= q)
                zip_step_toward(z, side, lim, higher());
            else if (e.side == Side::Bid)
                zip_step_toward(z, side, lim, lower());
        } else if (e.side == Side::Ask && price >= q) {
            zip_step_toward(z, side, lim, lower());
        }
    } else {
        if (e.accepted()) {
            if (price >= q)
                zip_step_toward(z, side, lim, lower());
            else if (e.side == Side::Ask)
                zip_step_toward(z, side, lim, higher());
        } else if (e.side == Side::Bid && price <= q) {
            zip_step_toward(z, side, lim, higher());
        }
    }
}

class ZipTrader final : public Trader {
  public:
    ZipTrader(std::string id, Side side, Rng& init_rng) : Trader(std::move(id), "ZIP", side) {
        zip_ = zip_init(side, init_rng);
    }

    const ZipState& zip_state() const noexcept { return zip_; }

  protected:
    void observe(const MarketEvent& e, const MarketView&, Rng& rng) override {
        if (!assignment()) return;
        zip_update(zip_, side(), assignment()->limit_price, e, rng);
    }

    std::optional<Price> quote_price(const MarketView&, Rng&) override { return zip_quote(state(), zip_); }

  private:
    ZipState zip_;
};

}  // namespace cdasim
