#pragma once

#include "cdasim/traders/trader.hpp"

namespace cdasim {

/// Quotes the limit price itself.
inline std::optional<Price> giveaway_quote(const TraderState& state) {
    if (!state.current_order) return std::nullopt;
    return state.current_order->limit_price;
}

class GiveawayTrader final : public Trader {
  public:
    GiveawayTrader(std::string id, Side side) : Trader(std::move(id), "GVWY", side) {}

  protected:
    std::optional<Price> quote_price(const MarketView&, Rng&) override { return giveaway_quote(state()); }
};

}  // namespace cdasim
