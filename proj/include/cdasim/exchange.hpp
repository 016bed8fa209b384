#pragma once

// Price-time-priority limit order book with continuous double auction matching,
// a FIFO inbound message queue and an append-only trade tape.
//
// Concurrency: any number of producers may call enqueue()/enqueue_withdraw();
// exactly one consumer calls process_next(). summary(), tape reads and
// trades_since() may run concurrently with both.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "cdasim/util/format.hpp"

namespace cdasim {

enum class Side : std::uint8_t { Bid, Ask };

constexpr Side opposite(Side s) noexcept { return s == Side::Bid ? Side::Ask : Side::Bid; }

constexpr std::string_view to_string(Side s) noexcept { return s == Side::Bid ? "BID" : "ASK"; }

using Price = std::int64_t;     // integer ticks
using Quantity = std::int64_t;
using OrderId = std::uint64_t;

struct Order {
    OrderId order_id = 0;  // assigned by the exchange on enqueue
    std::string trader_id;
    Side side = Side::Bid;
    Price price = 0;
    Quantity quantity = 1;
    double submit_time = 0.0;
    std::uint64_t tag = 0;  // owner bookkeeping, carried through to trades untouched
};

struct Trade {
    double time = 0.0;
    Price price = 0;
    Quantity quantity = 0;
    std::string buyer_id;
    std::string seller_id;
    Side resting_side = Side::Ask;
    OrderId buy_order_id = 0;
    OrderId sell_order_id = 0;
    std::uint64_t buy_tag = 0;
    std::uint64_t sell_tag = 0;

    Side aggressor_side() const noexcept { return opposite(resting_side); }
};

struct LobSummary {
    double time = 0.0;
    std::optional<Price> best_bid;
    std::optional<Price> best_ask;
    Quantity bid_qty_total = 0;
    Quantity ask_qty_total = 0;
    std::size_t bid_depth = 0;
    std::size_t ask_depth = 0;
    Quantity qty_at_best_bid = 0;
    Quantity qty_at_best_ask = 0;
    std::optional<Trade> last_trade;
};

enum class AckStatus : std::uint8_t { Accepted, BadPrice, BadQuantity, BadTime, UnknownTrader };

constexpr std::string_view to_string(AckStatus s) noexcept {
    switch (s) {
        case AckStatus::Accepted: return "accepted";
        case AckStatus::BadPrice: return "non-positive price";
        case AckStatus::BadQuantity: return "non-positive quantity";
        case AckStatus::BadTime: return "negative submit time";
        case AckStatus::UnknownTrader: return "unknown trader";
    }
    return "?";
}

struct Ack {
    AckStatus status = AckStatus::Accepted;
    OrderId order_id = 0;

    bool accepted() const noexcept { return status == AckStatus::Accepted; }
};

/// Removes a trader's resting order. Issued by the session when a trader's
/// assignment is superseded; travels through the same FIFO as orders.
struct Withdraw {
    std::string trader_id;
};

using Message = std::variant<Order, Withdraw>;

/// Outcome of one process_next() call.
struct Processed {
    bool dequeued = false;             // false when the inbound queue was empty
    bool admitted = false;             // false for withdrawals and for orders the admit hook refused
    std::optional<Order> incoming;     // the order message, if it was one
    std::optional<LobSummary> before;  // book state just before matching; set only when a trade occurred
    std::vector<Trade> trades;         // executions in match order (at most one for unit orders)

    std::optional<Trade> trade() const {
        if (trades.empty()) return std::nullopt;
        return trades.front();
    }
};

class Lob {
  public:
    using AdmitFn = std::function<bool(const Order&)>;

    Lob() = default;
    Lob(const Lob&) = delete;
    Lob& operator=(const Lob&) = delete;

    void register_trader(std::string trader_id) {
        std::unique_lock lock(registry_mutex_);
        registry_.insert(std::move(trader_id));
    }

    bool is_registered(const std::string& trader_id) const {
        std::shared_lock lock(registry_mutex_);
        return registry_.contains(trader_id);
    }

    /// Validates and appends an order to the inbound queue. The exchange assigns order ids
    /// in enqueue order, so id order is FIFO order.
    Ack enqueue(Order order) {
        if (order.price < 1) return {AckStatus::BadPrice, 0};
        if (order.quantity < 1) return {AckStatus::BadQuantity, 0};
        if (!(order.submit_time >= 0.0)) return {AckStatus::BadTime, 0};
        if (!is_registered(order.trader_id)) return {AckStatus::UnknownTrader, 0};
        OrderId id;
        {
            std::lock_guard lock(inbound_mutex_);
            id = ++last_order_id_;
            order.order_id = id;
            inbound_.emplace_back(std::move(order));
        }
        inbound_cv_.notify_one();
        return {AckStatus::Accepted, id};
    }

    void enqueue_withdraw(std::string trader_id) {
        {
            std::lock_guard lock(inbound_mutex_);
            inbound_.emplace_back(Withdraw{std::move(trader_id)});
        }
        inbound_cv_.notify_one();
    }

    std::size_t pending() const {
        std::lock_guard lock(inbound_mutex_);
        return inbound_.size();
    }

    /// Blocks until a message is queued or `timeout` elapses. Returns whether one is queued.
    bool wait_for_message(std::chrono::microseconds timeout) {
        std::unique_lock lock(inbound_mutex_);
        return inbound_cv_.wait_for(lock, timeout, [&] { return !inbound_.empty(); });
    }

    /// Dequeues one message and applies it. A new order first replaces the trader's
    /// resting order, then executes against the opposite side at resting prices while
    /// it crosses; any remainder rests. `admit` may refuse an order at dequeue time
    /// (the refusal removes nothing from the book).
    Processed process_next(const AdmitFn& admit = {}) {
        Processed out;
        Message msg;
        {
            std::lock_guard lock(inbound_mutex_);
            if (inbound_.empty()) return out;
            msg = std::move(inbound_.front());
            inbound_.pop_front();
        }
        out.dequeued = true;

        if (auto* w = std::get_if<Withdraw>(&msg)) {
            std::unique_lock lock(book_mutex_);
            remove_live(w->trader_id);
            return out;
        }

        Order& order = std::get<Order>(msg);
        out.incoming = order;
        if (admit && !admit(order)) return out;
        out.admitted = true;

        std::unique_lock lock(book_mutex_);
        remove_live(order.trader_id);
        if (crosses(order)) out.before = summary_locked();
        while (order.quantity > 0 && crosses(order)) out.trades.push_back(match_one(order));
        if (order.quantity > 0) rest(std::move(order));
        return out;
    }

    LobSummary summary() const {
        std::shared_lock lock(book_mutex_);
        return summary_locked();
    }

    std::vector<Trade> tape() const {
        std::shared_lock lock(book_mutex_);
        return tape_;
    }

    std::size_t tape_size() const {
        std::shared_lock lock(book_mutex_);
        return tape_.size();
    }

    /// Copies tape entries from index `cursor` onward.
    std::vector<Trade> trades_since(std::size_t cursor) const {
        std::shared_lock lock(book_mutex_);
        if (cursor >= tape_.size()) return {};
        return {tape_.begin() + static_cast<std::ptrdiff_t>(cursor), tape_.end()};
    }

    /// Snapshot of resting orders, bids best-first then asks best-first, each level in queue order.
    std::vector<Order> resting_orders() const {
        std::shared_lock lock(book_mutex_);
        std::vector<Order> out;
        for (const auto& [price, level] : bids_)
            for (const auto& o : level.orders) out.push_back(o);
        for (const auto& [price, level] : asks_)
            for (const auto& o : level.orders) out.push_back(o);
        return out;
    }

    std::optional<Order> live_order(const std::string& trader_id) const {
        std::shared_lock lock(book_mutex_);
        auto it = live_.find(trader_id);
        if (it == live_.end()) return std::nullopt;
        return *it->second.it;
    }

  private:
    struct Level {
        std::list<Order> orders;
        Quantity total = 0;
    };
    using BidBook = std::map<Price, Level, std::greater<>>;
    using AskBook = std::map<Price, Level, std::less<>>;

    struct Locator {
        Side side;
        Price price;
        std::list<Order>::iterator it;
    };

    bool crosses(const Order& o) const {
        if (o.side == Side::Bid) return !asks_.empty() && o.price >= asks_.begin()->first;
        return !bids_.empty() && o.price <= bids_.begin()->first;
    }

    template <typename Book>
    Trade match_against(Order& incoming, Book& book, Quantity& book_total) {
        auto level_it = book.begin();
        Level& level = level_it->second;
        Order& resting = level.orders.front();
        Quantity qty = std::min(incoming.quantity, resting.quantity);

        Trade t;
        t.time = tape_.empty() ? incoming.submit_time : std::max(incoming.submit_time, tape_.back().time);
        t.price = resting.price;
        t.quantity = qty;
        t.resting_side = resting.side;
        const Order& buy = incoming.side == Side::Bid ? incoming : resting;
        const Order& sell = incoming.side == Side::Ask ? incoming : resting;
        t.buyer_id = buy.trader_id;
        t.seller_id = sell.trader_id;
        t.buy_order_id = buy.order_id;
        t.sell_order_id = sell.order_id;
        t.buy_tag = buy.tag;
        t.sell_tag = sell.tag;

        incoming.quantity -= qty;
        resting.quantity -= qty;
        level.total -= qty;
        book_total -= qty;
        if (resting.quantity == 0) {
            live_.erase(resting.trader_id);
            level.orders.pop_front();
            if (level.orders.empty()) book.erase(level_it);
        }
        tape_.push_back(t);
        return t;
    }

    Trade match_one(Order& incoming) {
        if (incoming.side == Side::Bid) return match_against(incoming, asks_, ask_total_);
        return match_against(incoming, bids_, bid_total_);
    }

    template <typename Book>
    std::list<Order>::iterator insert_into(Book& book, Order&& o) {
        Level& level = book[o.price];
        level.total += o.quantity;
        // Time priority: (submit_time, order_id); arrivals are almost always last.
        auto pos = level.orders.end();
        while (pos != level.orders.begin()) {
            auto prev = std::prev(pos);
            if (prev->submit_time < o.submit_time ||
                (prev->submit_time == o.submit_time && prev->order_id < o.order_id))
                break;
            pos = prev;
        }
        return level.orders.insert(pos, std::move(o));
    }

    void rest(Order&& o) {
        Side side = o.side;
        Price price = o.price;
        std::string trader = o.trader_id;
        std::list<Order>::iterator it;
        if (side == Side::Bid) {
            bid_total_ += o.quantity;
            it = insert_into(bids_, std::move(o));
        } else {
            ask_total_ += o.quantity;
            it = insert_into(asks_, std::move(o));
        }
        live_[std::move(trader)] = Locator{side, price, it};
    }

    template <typename Book>
    void erase_from(Book& book, Quantity& book_total, const Locator& loc) {
        auto level_it = book.find(loc.price);
        Level& level = level_it->second;
        level.total -= loc.it->quantity;
        book_total -= loc.it->quantity;
        level.orders.erase(loc.it);
        if (level.orders.empty()) book.erase(level_it);
    }

    void remove_live(const std::string& trader_id) {
        auto it = live_.find(trader_id);
        if (it == live_.end()) return;
        if (it->second.side == Side::Bid)
            erase_from(bids_, bid_total_, it->second);
        else
            erase_from(asks_, ask_total_, it->second);
        live_.erase(it);
    }

    LobSummary summary_locked() const {
        LobSummary s;
        s.time = tape_.empty() ? 0.0 : tape_.back().time;
        if (!bids_.empty()) {
            s.best_bid = bids_.begin()->first;
            s.qty_at_best_bid = bids_.begin()->second.total;
        }
        if (!asks_.empty()) {
            s.best_ask = asks_.begin()->first;
            s.qty_at_best_ask = asks_.begin()->second.total;
        }
        s.bid_qty_total = bid_total_;
        s.ask_qty_total = ask_total_;
        s.bid_depth = bids_.size();
        s.ask_depth = asks_.size();
        if (!tape_.empty()) s.last_trade = tape_.back();
        return s;
    }

    mutable std::shared_mutex registry_mutex_;
    std::unordered_set<std::string> registry_;

    mutable std::mutex inbound_mutex_;
    std::condition_variable inbound_cv_;
    std::deque<Message> inbound_;
    OrderId last_order_id_ = 0;

    mutable std::shared_mutex book_mutex_;
    BidBook bids_;
    AskBook asks_;
    Quantity bid_total_ = 0;
    Quantity ask_total_ = 0;
    std::unordered_map<std::string, Locator> live_;
    std::vector<Trade> tape_;
};

/// Tape export: `time,price,quantity,buyer,seller`.
inline void write_tape_csv(std::ostream& out, std::span<const Trade> tape) {
    out << "time,price,quantity,buyer,seller\n";
    for (const auto& t : tape)
        out << util::format_double(t.time) << ',' << t.price << ',' << t.quantity << ',' << t.buyer_id << ','
            << t.seller_id << '\n';
}

}  // namespace cdasim
