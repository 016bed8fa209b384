#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdasim/exchange.hpp"
#include "cdasim/util/rng.hpp"

namespace cdasim {

/// A customer instruction: trade one unit on `side`, never worse than `limit_price`.
struct CustomerOrder {
    std::string trader_id;
    Side side = Side::Bid;
    Price limit_price = 1;
    double issue_time = 0.0;
    std::uint64_t seq = 0;  // per-trader assignment number, starts at 1

    bool operator==(const CustomerOrder&) const = default;
};

/// Price bounds every quote must stay within.
struct PriceBounds {
    Price floor = 1;
    Price cap = 400;
};

/// Surplus a fill at `price` earns against `limit`. Negative means a loss.
constexpr Price surplus(Side side, Price limit, Price price) noexcept {
    return side == Side::Bid ? limit - price : price - limit;
}

constexpr bool respects_limit(Side side, Price limit, Price price) noexcept {
    return side == Side::Bid ? price <= limit : price >= limit;
}

/// Something a trader saw happen in the market: a trade (an accepted shout by the
/// aggressor side) or a new best price that has not traded.
struct MarketEvent {
    enum class Kind : std::uint8_t { Trade, Shout };

    Kind kind = Kind::Shout;
    Side side = Side::Bid;
    Price price = 0;
    double time = 0.0;

    bool accepted() const noexcept { return kind == Kind::Trade; }

    static MarketEvent from_trade(const Trade& t) { return {Kind::Trade, t.aggressor_side(), t.price, t.time}; }
    static MarketEvent shout(Side side, Price price, double time) { return {Kind::Shout, side, price, time}; }
};

/// What a trader is shown each time it is polled.
struct MarketView {
    double time = 0.0;
    LobSummary summary;
    std::span<const Trade> new_trades;  // tape entries since this trader's previous poll
    double session_end = 3600.0;
    double issue_interval = 30.0;
    PriceBounds bounds;
};

struct TraderState {
    std::string trader_id;
    std::string strategy;
    Side side = Side::Bid;
    Price balance = 0;
    std::optional<CustomerOrder> current_order;
    std::vector<Trade> blotter;
};

/// Base for all strategies. Each instance is driven by exactly one thread at a time.
class Trader {
  public:
    Trader(std::string trader_id, std::string strategy, Side side) {
        state_.trader_id = std::move(trader_id);
        state_.strategy = std::move(strategy);
        state_.side = side;
    }
    virtual ~Trader() = default;

    Trader(const Trader&) = delete;
    Trader& operator=(const Trader&) = delete;

    const TraderState& state() const noexcept { return state_; }
    const std::string& id() const noexcept { return state_.trader_id; }
    Side side() const noexcept { return state_.side; }
    const std::string& strategy() const noexcept { return state_.strategy; }

    /// Replaces any previous assignment.
    void assign(const CustomerOrder& order) {
        state_.current_order = order;
        on_assign();
    }

    /// Books a fill. `consumed` is true when the fill used up the current assignment.
    void record_fill(const Trade& t, Price gain, bool consumed) {
        state_.blotter.push_back(t);
        state_.balance += gain;
        if (consumed) state_.current_order.reset();
    }

    /// Digest what happened since the last poll, then return the order to place.
    /// No order means "keep whatever is resting".
    std::optional<Order> poll(const MarketView& view, Rng& rng) {
        for (const auto& t : view.new_trades) observe(MarketEvent::from_trade(t), view, rng);
        if (view.summary.best_bid != seen_bid_) {
            seen_bid_ = view.summary.best_bid;
            if (seen_bid_) observe(MarketEvent::shout(Side::Bid, *seen_bid_, view.time), view, rng);
        }
        if (view.summary.best_ask != seen_ask_) {
            seen_ask_ = view.summary.best_ask;
            if (seen_ask_) observe(MarketEvent::shout(Side::Ask, *seen_ask_, view.time), view, rng);
        }
        if (!state_.current_order) return std::nullopt;
        auto price = quote_price(view, rng);
        if (!price) return std::nullopt;
        const auto& a = *state_.current_order;
        // Final guard; strategies are tested to respect limits without it.
        Price p = a.side == Side::Bid ? std::min(*price, a.limit_price) : std::max(*price, a.limit_price);
        p = std::max<Price>(p, 1);
        Order o;
        o.trader_id = state_.trader_id;
        o.side = a.side;
        o.price = p;
        o.quantity = 1;
        o.submit_time = view.time;
        o.tag = a.seq;
        return o;
    }

  protected:
    virtual void on_assign() {}
    virtual void observe(const MarketEvent& /*event*/, const MarketView& /*view*/, Rng& /*rng*/) {}
    virtual std::optional<Price> quote_price(const MarketView& view, Rng& rng) = 0;

    const std::optional<CustomerOrder>& assignment() const noexcept { return state_.current_order; }

  private:
    TraderState state_;
    std::optional<Price> seen_bid_;
    std::optional<Price> seen_ask_;
};

}  // namespace cdasim
