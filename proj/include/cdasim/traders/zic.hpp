#pragma once

#include "cdasim/traders/trader.hpp"

namespace cdasim {

/// Zero-intelligence constrained: buyers draw uniformly from [floor, limit], sellers
/// from [limit, cap]. An empty interval quotes the limit.
inline std::optional<Price> zic_quote(const TraderState& state, Rng& rng, Price price_floor, Price price_cap) {
    if (!state.current_order) return std::nullopt;
    const Price limit = state.current_order->limit_price;
    if (state.current_order->side == Side::Bid) {
        if (limit < price_floor) return limit;
        return uniform_int<Price>(rng, price_floor, limit);
    }
    if (limit > price_cap) return limit;
    return uniform_int<Price>(rng, limit, price_cap);
}

class ZicTrader final : public Trader {
  public:
    ZicTrader(std::string id, Side side) : Trader(std::move(id), "ZIC", side) {}

  protected:
    std::optional<Price> quote_price(const MarketView& view, Rng& rng) override {
        return zic_quote(state(), rng, view.bounds.floor, view.bounds.cap);
    }
};

}  // namespace cdasim
