#pragma once

// The LSTM-driven trader: features of the live book plus its own limit go through
// the network; predictions that would lose money are replaced by a quote one tick
// inside the best price on the trader's own side.

#include <algorithm>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdasim/features.hpp"
#include "cdasim/nn/network.hpp"
#include "cdasim/traders/trader.hpp"

namespace cdasim {

struct DtxState {
    std::shared_ptr<const nn::ModelParams> model;
    std::optional<double> last_trade_time;
    std::optional<CustomerOrder> assignment;
};

/// Keep the prediction when it respects the limit, else improve the own-side best by one
/// tick without crossing the limit (the limit itself when that side is empty).
inline Price dtx_choose_price(Side side, Price limit, Price predicted, const LobSummary& s,
                              PriceBounds bounds = {}) {
    if (side == Side::Bid) {
        if (predicted <= limit) return std::clamp(predicted, std::min(bounds.floor, limit), limit);
        return s.best_bid ? std::min(limit, *s.best_bid + 1) : limit;
    }
    if (predicted >= limit) return std::clamp(predicted, limit, std::max(bounds.cap, limit));
    return s.best_ask ? std::max(limit, *s.best_ask - 1) : limit;
}

/// Network prediction in ticks for a window of raw (unnormalised) input vectors.
inline Price dtx_predict(const nn::ModelParams& model, std::span<const InputVector> raw_window) {
    std::vector<InputVector> window;
    window.reserve(raw_window.size());
    for (const auto& x : raw_window) window.push_back(normalize_inputs(x, model.norm));
    return denormalize_price(nn::forward(model, window), model.norm);
}

/// Quote for the current instant `s.time`. With seq_len > 1 the current inputs fill the
/// whole window.
inline std::optional<Order> dtx_quote(const DtxState& state, const LobSummary& s, std::span<const Trade> tape,
                                      PriceBounds bounds = {}) {
    if (!state.assignment) return std::nullopt;
    if (!state.model) throw std::logic_error("dtx_quote: no model");
    const auto& a = *state.assignment;
    const double p_star = estimate_p_star(tape, s);
    const double alpha = tape.empty() ? 0.0 : smith_alpha(tape, p_star);
    const InputVector x = make_inputs(s, a.side, a.limit_price, s.time, state.last_trade_time, p_star, alpha);
    std::vector<InputVector> window(static_cast<std::size_t>(state.model->seq_len), x);
    const Price predicted = dtx_predict(*state.model, window);
    Order o;
    o.trader_id = a.trader_id;
    o.side = a.side;
    o.price = dtx_choose_price(a.side, a.limit_price, predicted, s, bounds);
    o.quantity = 1;
    o.submit_time = s.time;
    o.tag = a.seq;
    return o;
}

inline void dtx_on_trade(DtxState& state, const Trade& t) { state.last_trade_time = t.time; }

class DtxTrader final : public Trader {
  public:
    /// Requote at least this often (virtual seconds) even when the book is unchanged.
    static constexpr double kRefreshInterval = 1.0;

    DtxTrader(std::string id, Side side, std::shared_ptr<const nn::ModelParams> model)
        : Trader(std::move(id), "DTX", side), model_(std::move(model)) {
        if (!model_) throw std::invalid_argument("DTX trader requires a model");
    }

  protected:
    void on_assign() override { stale_ = true; }

    void observe(const MarketEvent& e, const MarketView&, Rng&) override {
        if (e.accepted()) tracker_.add(e.price, e.time);
        stale_ = true;
    }

    std::optional<Price> quote_price(const MarketView& view, Rng&) override {
        if (!stale_ && view.time - last_quote_time_ < kRefreshInterval) return std::nullopt;
        const auto& a = *assignment();
        InputVector x = make_inputs(view.summary, a.side, a.limit_price, view.time, tracker_.last_trade_time(),
                                    tracker_.p_star(view.summary), tracker_.alpha());
        const auto len = static_cast<std::size_t>(model_->seq_len);
        recent_.push_back(x);
        while (recent_.size() > len) recent_.pop_front();
        std::vector<InputVector> window(recent_.begin(), recent_.end());
        while (window.size() < len) window.insert(window.begin(), window.front());
        const Price predicted = dtx_predict(*model_, window);
        stale_ = false;
        last_quote_time_ = view.time;
        return dtx_choose_price(a.side, a.limit_price, predicted, view.summary, view.bounds);
    }

  private:
    std::shared_ptr<const nn::ModelParams> model_;
    TapeTracker tracker_;
    std::deque<InputVector> recent_;
    bool stale_ = true;
    double last_quote_time_ = -1e300;
};

}  // namespace cdasim
