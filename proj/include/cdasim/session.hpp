#pragma once

// One market session: supply/demand schedules over a drifting offset series,
// periodic customer assignments to 20 buyers and 20 sellers, a trading clock, and
// per-trader profit accounting. Runs either single-threaded in lockstep (a 0.1 s
// virtual tick, traders polled in seeded random order) or with one thread per
// trader plus an exchange consumer and a clock/issuer thread.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdasim/dtx.hpp"
#include "cdasim/exchange.hpp"
#include "cdasim/features.hpp"
#include "cdasim/traders/aa.hpp"
#include "cdasim/traders/gdx.hpp"
#include "cdasim/traders/giveaway.hpp"
#include "cdasim/traders/zic.hpp"
#include "cdasim/traders/zip.hpp"
#include "cdasim/util/csv.hpp"
#include "cdasim/util/format.hpp"
#include "cdasim/util/rng.hpp"

namespace cdasim {

inline constexpr int kTradersPerSide = 20;

// ---------------------------------------------------------------------------
// Strategies

inline const std::vector<std::string>& known_strategies() {
    static const std::vector<std::string> names = {"GVWY", "ZIC", "ZIP", "GDX", "AA", "DTX"};
    return names;
}

/// Canonical upper-case strategy name; throws std::invalid_argument for unknown names.
inline std::string canonical_strategy(std::string_view name) {
    std::string up(name);
    for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& k : known_strategies())
        if (k == up) return up;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

inline std::unique_ptr<Trader> make_trader(std::string_view strategy, std::string id, Side side, Rng& init_rng,
                                           const std::shared_ptr<const nn::ModelParams>& model) {
    const std::string s = canonical_strategy(strategy);
    if (s == "GVWY") return std::make_unique<GiveawayTrader>(std::move(id), side);
    if (s == "ZIC") return std::make_unique<ZicTrader>(std::move(id), side);
    if (s == "ZIP") return std::make_unique<ZipTrader>(std::move(id), side, init_rng);
    if (s == "GDX") return std::make_unique<GdxTrader>(std::move(id), side);
    if (s == "AA") return std::make_unique<AaTrader>(std::move(id), side, init_rng);
    if (!model) throw std::invalid_argument("strategy DTX requires a model");
    return std::make_unique<DtxTrader>(std::move(id), side, model);
}

// ---------------------------------------------------------------------------
// Schedules

enum class StepMode : std::uint8_t { Fixed, Jittered, Random };

inline std::string_view to_string(StepMode m) {
    switch (m) {
        case StepMode::Fixed: return "fixed";
        case StepMode::Jittered: return "jittered";
        case StepMode::Random: return "random";
    }
    return "?";
}

inline StepMode parse_step_mode(std::string_view s) {
    std::string low(s);
    for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (low == "fixed") return StepMode::Fixed;
    if (low == "jittered") return StepMode::Jittered;
    if (low == "random") return StepMode::Random;
    throw std::invalid_argument("unknown stepmode '" + std::string(s) + "'");
}

/// Seeded random walk in ticks: 0 on [0, step), then a uniform step in [-max_step, max_step]
/// every `step_seconds`, never below `min_offset`.
class OffsetSeries {
  public:
    OffsetSeries() = default;
    OffsetSeries(std::vector<Price> values, double step_seconds)
        : values_(std::move(values)), step_seconds_(step_seconds) {}

    Price operator()(double t) const {
        if (values_.empty() || t <= 0.0) return values_.empty() ? 0 : values_.front();
        auto k = static_cast<std::size_t>(std::floor(t / step_seconds_));
        return values_[std::min(k, values_.size() - 1)];
    }

    const std::vector<Price>& values() const noexcept { return values_; }
    double step_seconds() const noexcept { return step_seconds_; }

  private:
    std::vector<Price> values_;
    double step_seconds_ = 30.0;
};

inline OffsetSeries build_offset_series(std::uint64_t seed, double duration,
                                        Price min_offset = std::numeric_limits<Price>::min() / 2,
                                        double step_seconds = 30.0, Price max_step = 5) {
    if (!(duration > 0.0)) throw std::invalid_argument("build_offset_series: duration must be positive");
    Rng rng(seed);
    const auto segments = static_cast<std::size_t>(std::ceil(duration / step_seconds)) + 1;
    std::vector<Price> values;
    values.reserve(segments);
    Price v = 0;
    values.push_back(v);
    for (std::size_t k = 1; k < segments; ++k) {
        v = std::max(min_offset, v + uniform_int<Price>(rng, -max_step, max_step));
        values.push_back(v);
    }
    return OffsetSeries(std::move(values), step_seconds);
}

struct SupplyDemandSchedule {
    Side side = Side::Bid;
    Price low = 50;
    Price high = 150;
    double issue_interval = 30.0;
    StepMode stepmode = StepMode::Jittered;
    std::function<Price(double)> offset;  // empty means no offset
};

inline void validate(const SupplyDemandSchedule& s) {
    if (s.low > s.high) throw std::invalid_argument("schedule: range low exceeds high");
    if (s.low < 1) throw std::invalid_argument("schedule: range low must be >= 1");
    if (!(s.issue_interval > 0.0)) throw std::invalid_argument("schedule: issue_interval must be positive");
}

/// Draws one limit per trader from the schedule's range at `time` and hands them out in
/// a random order. Returned orders carry seq 0; the session numbers them.
inline std::vector<CustomerOrder> issue_customer_orders(const SupplyDemandSchedule& schedule,
                                                        const std::vector<std::string>& traders, double time,
                                                        Rng& rng) {
    const std::size_t n = traders.size();
    std::vector<Price> limits(n);
    const double lo = static_cast<double>(schedule.low);
    const double hi = static_cast<double>(schedule.high);
    const double step = n > 1 ? (hi - lo) / static_cast<double>(n - 1) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double even = n > 1 ? lo + step * static_cast<double>(i) : 0.5 * (lo + hi);
        switch (schedule.stepmode) {
            case StepMode::Fixed:
                limits[i] = static_cast<Price>(std::llround(even));
                break;
            case StepMode::Jittered: {
                const double jitter = step > 0.0 ? uniform_real(rng, -0.5 * step, 0.5 * step) : 0.0;
                limits[i] = std::clamp(static_cast<Price>(std::llround(even + jitter)), schedule.low, schedule.high);
                break;
            }
            case StepMode::Random:
                limits[i] = uniform_int<Price>(rng, schedule.low, schedule.high);
                break;
        }
    }
    std::shuffle(limits.begin(), limits.end(), rng);
    const Price shift = schedule.offset ? schedule.offset(time) : 0;
    std::vector<CustomerOrder> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({traders[i], schedule.side, std::max<Price>(1, limits[i] + shift), time, 0});
    return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class Mode : std::uint8_t { Threaded, Lockstep };

inline std::string_view to_string(Mode m) { return m == Mode::Threaded ? "threaded" : "lockstep"; }

struct StrategyCount {
    std::string strategy;
    int count = 0;

    bool operator==(const StrategyCount&) const = default;
};

using Population = std::vector<StrategyCount>;

struct SessionConfig {
    double duration = 3600.0;
    Population buyers;
    Population sellers;
    std::uint64_t seed = 1;
    Mode mode = Mode::Lockstep;
    Price range_low = 50;
    Price range_high = 150;
    double issue_interval = 30.0;
    StepMode stepmode = StepMode::Jittered;
    double tick = 0.1;          // virtual seconds between polls
    double time_scale = 200.0;  // threaded mode: virtual seconds per wall-clock second
    PriceBounds bounds{1, 400};
    bool record_snapshots = true;
};

inline std::string format_population(const Population& p) {
    std::string out;
    for (const auto& sc : p) {
        if (!out.empty()) out += ',';
        out += sc.strategy + ":" + std::to_string(sc.count);
    }
    return out;
}

/// "ZIC:10,DTX:10" -> population. Names are canonicalised.
inline Population parse_population(std::string_view text) {
    Population out;
    for (auto item : util::split(text, ',')) {
        item = util::trim(item);
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string_view::npos) throw std::invalid_argument("population entry '" + std::string(item) +
                                                                         "' must be NAME:COUNT");
        int count = 0;
        if (!util::parse_int(item.substr(colon + 1), count) || count < 0)
            throw std::invalid_argument("bad count in '" + std::string(item) + "'");
        out.push_back({canonical_strategy(util::trim(item.substr(0, colon))), count});
    }
    return out;
}

inline int population_size(const Population& p) {
    int n = 0;
    for (const auto& sc : p) n += sc.count;
    return n;
}

inline bool uses_strategy(const SessionConfig& c, std::string_view strategy) {
    for (const auto* side : {&c.buyers, &c.sellers})
        for (const auto& sc : *side)
            if (sc.count > 0 && sc.strategy == strategy) return true;
    return false;
}

inline void validate(const SessionConfig& c) {
    if (!(c.duration > 0.0)) throw std::invalid_argument("config: duration must be positive");
    if (!(c.tick > 0.0)) throw std::invalid_argument("config: tick must be positive");
    if (!(c.time_scale > 0.0)) throw std::invalid_argument("config: time_scale must be positive");
    for (const auto* side : {&c.buyers, &c.sellers})
        for (const auto& sc : *side) (void)canonical_strategy(sc.strategy);
    if (population_size(c.buyers) != kTradersPerSide) throw std::invalid_argument("config: buyers must total 20");
    if (population_size(c.sellers) != kTradersPerSide) throw std::invalid_argument("config: sellers must total 20");
    validate(SupplyDemandSchedule{Side::Bid, c.range_low, c.range_high, c.issue_interval, c.stepmode, {}});
    if (c.bounds.floor < 1 || c.bounds.cap < c.bounds.floor) throw std::invalid_argument("config: bad price bounds");
}

/// Key-value config text: `key = value` lines, `#` comments. Keys: duration, seed, mode,
/// buyers, sellers, range_low, range_high, issue_interval, stepmode, tick, time_scale.
inline SessionConfig parse_session_config(std::istream& in, const std::string& source = "<config>") {
    SessionConfig c;
    util::LineReader reader(in);
    std::string line;
    auto fail = [&](const std::string& what) -> void { throw util::ParseError(source, reader.line_no(), what); };
    while (reader.next(line)) {
        auto hash = line.find('#');
        std::string_view body = util::trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        const std::string key(util::trim(body.substr(0, eq)));
        const std::string_view value = util::trim(body.substr(eq + 1));
        try {
            bool ok = true;
            if (key == "duration") ok = util::parse_double(value, c.duration);
            else if (key == "seed") ok = util::parse_int(value, c.seed);
            else if (key == "mode") {
                if (value == "lockstep" || value == "LOCKSTEP") c.mode = Mode::Lockstep;
                else if (value == "threaded" || value == "THREADED") c.mode = Mode::Threaded;
                else ok = false;
            } else if (key == "buyers") c.buyers = parse_population(value);
            else if (key == "sellers") c.sellers = parse_population(value);
            else if (key == "range_low") ok = util::parse_int(value, c.range_low);
            else if (key == "range_high") ok = util::parse_int(value, c.range_high);
            else if (key == "issue_interval") ok = util::parse_double(value, c.issue_interval);
            else if (key == "stepmode") c.stepmode = parse_step_mode(value);
            else if (key == "tick") ok = util::parse_double(value, c.tick);
            else if (key == "time_scale") ok = util::parse_double(value, c.time_scale);
            else fail("unknown key '" + key + "'");
            if (!ok) fail("bad value for '" + key + "'");
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    try {
        validate(c);
    } catch (const std::invalid_argument& e) {
        throw util::ParseError(source, reader.line_no(), e.what());
    }
    return c;
}

inline void write_session_config(std::ostream& out, const SessionConfig& c) {
    out << "duration = " << util::format_double(c.duration) << '\n'
        << "seed = " << c.seed << '\n'
        << "mode = " << to_string(c.mode) << '\n'
        << "buyers = " << format_population(c.buyers) << '\n'
        << "sellers = " << format_population(c.sellers) << '\n'
        << "range_low = " << c.range_low << '\n'
        << "range_high = " << c.range_high << '\n'
        << "issue_interval = " << util::format_double(c.issue_interval) << '\n'
        << "stepmode = " << to_string(c.stepmode) << '\n'
        << "tick = " << util::format_double(c.tick) << '\n'
        << "time_scale = " << util::format_double(c.time_scale) << '\n';
}

// ---------------------------------------------------------------------------
// Results

struct SessionResult {
    std::map<std::string, double> ppt_by_strategy;
    std::map<std::string, Price> profit_by_trader;
    std::map<std::string, std::string> strategy_by_trader;
    std::vector<Trade> tape;
    std::vector<FeatureRecord> snapshots;
    std::map<std::string, std::vector<CustomerOrder>> assignments;  // per trader, index seq - 1
    std::size_t limit_violations = 0;  // fills that lost money against the order's own limit
};

/// Snapshot CSV (the 14 record columns).
inline void write_snapshots_csv(std::ostream& out, const SessionResult& r) { write_records_csv(out, r.snapshots); }

namespace detail {

class Market {
  public:
    Market(const SessionConfig& cfg, std::shared_ptr<const nn::ModelParams> model) : cfg_(cfg) {
        validate(cfg_);
        if ((uses_strategy(cfg_, "DTX")) && !model)
            throw std::invalid_argument("session uses DTX but no model was supplied");

        const OffsetSeries offsets = build_offset_series(mix_seed(cfg_.seed, 0), cfg_.duration, 1 - cfg_.range_low);
        auto offset_fn = [offsets](double t) { return offsets(t); };
        buyer_schedule_ = {Side::Bid, cfg_.range_low, cfg_.range_high, cfg_.issue_interval, cfg_.stepmode, offset_fn};
        seller_schedule_ = {Side::Ask, cfg_.range_low, cfg_.range_high, cfg_.issue_interval, cfg_.stepmode, offset_fn};
        issue_rng_.seed(mix_seed(cfg_.seed, 1));

        std::size_t index = 0;
        auto add_side = [&](const Population& pop, Side side, std::vector<std::string>& ids) {
            int k = 0;
            for (const auto& sc : pop)
                for (int j = 0; j < sc.count; ++j) {
                    char id[16];
                    std::snprintf(id, sizeof(id), "%c%02d", side == Side::Bid ? 'B' : 'S', k++);
                    auto slot = std::make_unique<Slot>();
                    slot->rng.seed(mix_seed(cfg_.seed, 100 + index));
                    slot->trader = make_trader(sc.strategy, id, side, slot->rng, model);
                    lob_.register_trader(id);
                    index_[id] = slots_.size();
                    ids.emplace_back(id);
                    slots_.push_back(std::move(slot));
                    ++index;
                }
        };
        add_side(cfg_.buyers, Side::Bid, buyer_ids_);
        add_side(cfg_.sellers, Side::Ask, seller_ids_);
    }

    std::size_t trader_count() const noexcept { return slots_.size(); }
    Lob& lob() noexcept { return lob_; }

    /// Hands every trader a fresh assignment and withdraws any order resting under the old one.
    void issue(double t) {
        for (const auto* side : {&buyer_schedule_, &seller_schedule_}) {
            const auto& ids = side->side == Side::Bid ? buyer_ids_ : seller_ids_;
            for (auto& order : issue_customer_orders(*side, ids, t, issue_rng_)) {
                Slot& s = *slots_[index_.at(order.trader_id)];
                std::lock_guard lock(s.mutex);
                order.seq = s.assignments.size() + 1;
                s.assignments.push_back(order);
                s.trader->assign(order);
                if (s.live_price) {
                    lob_.enqueue_withdraw(order.trader_id);
                    s.live_price.reset();
                }
            }
        }
    }

    void poll(std::size_t i, double t) {
        Slot& s = *slots_[i];
        std::lock_guard lock(s.mutex);
        MarketView view;
        view.time = t;
        view.summary = lob_.summary();
        view.summary.time = t;
        auto fresh = lob_.trades_since(s.tape_cursor);
        s.tape_cursor += fresh.size();
        view.new_trades = fresh;
        view.session_end = cfg_.duration;
        view.issue_interval = cfg_.issue_interval;
        view.bounds = cfg_.bounds;
        auto order = s.trader->poll(view, s.rng);
        if (!order) return;
        if (s.live_price && *s.live_price == order->price && s.live_tag == order->tag) return;
        if (lob_.enqueue(*order).accepted()) {
            s.live_price = order->price;
            s.live_tag = order->tag;
        }
    }

    /// Consumer side: applies every queued message. Returns whether anything was processed.
    bool drain() {
        bool any = false;
        const Lob::AdmitFn admit = [this](const Order& o) { return admits(o); };
        for (;;) {
            Processed r = lob_.process_next(admit);
            if (!r.dequeued) return any;
            any = true;
            for (const auto& trade : r.trades) settle(trade, r);
        }
    }

    SessionResult finish() {
        SessionResult out;
        out.tape = std::move(tape_);
        out.snapshots = std::move(snapshots_);
        out.limit_violations = violations_;
        std::map<std::string, std::pair<Price, int>> by_strategy;
        for (const auto& sp : slots_) {
            const auto& st = sp->trader->state();
            out.profit_by_trader[st.trader_id] = st.balance;
            out.strategy_by_trader[st.trader_id] = st.strategy;
            out.assignments[st.trader_id] = sp->assignments;
            auto& acc = by_strategy[st.strategy];
            acc.first += st.balance;
            acc.second += 1;
        }
        for (const auto& [name, acc] : by_strategy)
            out.ppt_by_strategy[name] = static_cast<double>(acc.first) / static_cast<double>(acc.second);
        return out;
    }

  private:
    struct Slot {
        std::unique_ptr<Trader> trader;
        std::mutex mutex;
        Rng rng;
        std::size_t tape_cursor = 0;
        std::vector<CustomerOrder> assignments;  // index seq - 1
        std::optional<Price> live_price;         // last order this trader sent that may still rest
        std::uint64_t live_tag = 0;
    };

    // Refuse orders placed under an assignment that has since been filled or replaced.
    bool admits(const Order& o) {
        Slot& s = *slots_[index_.at(o.trader_id)];
        std::lock_guard lock(s.mutex);
        const auto& cur = s.trader->state().current_order;
        const bool ok = cur && cur->seq == o.tag;
        if (!ok && s.live_tag == o.tag) s.live_price.reset();
        return ok;
    }

    Price fill(const std::string& trader_id, std::uint64_t tag, const Trade& t) {
        Slot& s = *slots_[index_.at(trader_id)];
        std::lock_guard lock(s.mutex);
        const CustomerOrder& a = s.assignments.at(tag - 1);
        const Price gain = surplus(a.side, a.limit_price, t.price);
        const auto& cur = s.trader->state().current_order;
        const bool consumed = cur && cur->seq == tag;
        s.trader->record_fill(t, gain, consumed);
        if (s.live_tag == tag) s.live_price.reset();
        return gain;
    }

    void settle(const Trade& t, const Processed& r) {
        const Price buyer_gain = fill(t.buyer_id, t.buy_tag, t);
        const Price seller_gain = fill(t.seller_id, t.sell_tag, t);
        if (buyer_gain < 0) ++violations_;
        if (seller_gain < 0) ++violations_;
        if (cfg_.record_snapshots && r.before && r.incoming) {
            const Order& in = *r.incoming;
            Price limit;
            {
                Slot& s = *slots_[index_.at(in.trader_id)];
                std::lock_guard lock(s.mutex);
                limit = s.assignments.at(in.tag - 1).limit_price;
            }
            LobSummary seen = *r.before;
            seen.time = t.time;
            snapshots_.push_back(make_record(seen, tape_, in.side, limit, t));
        }
        tape_.push_back(t);
    }

    SessionConfig cfg_;
    Lob lob_;
    SupplyDemandSchedule buyer_schedule_;
    SupplyDemandSchedule seller_schedule_;
    Rng issue_rng_;
    std::vector<std::unique_ptr<Slot>> slots_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> buyer_ids_;
    std::vector<std::string> seller_ids_;
    // Consumer-owned.
    std::vector<Trade> tape_;
    std::vector<FeatureRecord> snapshots_;
    std::size_t violations_ = 0;
};

inline SessionResult run_lockstep(Market& market, const SessionConfig& cfg) {
    Rng poll_rng(mix_seed(cfg.seed, 2));
    std::vector<std::size_t> order(market.trader_count());
    std::iota(order.begin(), order.end(), 0);
    const auto ticks = static_cast<std::int64_t>(std::llround(cfg.duration / cfg.tick));
    double next_issue = 0.0;
    for (std::int64_t k = 0; k < ticks; ++k) {
        const double t = static_cast<double>(k) * cfg.tick;
        if (t + 1e-9 >= next_issue) {
            market.issue(t);
            market.drain();
            next_issue += cfg.issue_interval;
        }
        std::shuffle(order.begin(), order.end(), poll_rng);
        for (std::size_t i : order) {
            market.poll(i, t);
            market.drain();
        }
    }
    return market.finish();
}

/// Virtual session time advancing at `scale` virtual seconds per wall second.
class VirtualClock {
  public:
    explicit VirtualClock(double scale) : scale_(scale), start_(std::chrono::steady_clock::now()) {}

    double now() const {
        const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start_;
        return wall.count() * scale_;
    }

    void sleep_until(double virtual_t) const {
        const auto target = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(virtual_t / scale_));
        std::this_thread::sleep_until(target);
    }

    std::chrono::duration<double> wall(double virtual_dt) const { return std::chrono::duration<double>(virtual_dt / scale_); }

  private:
    double scale_;
    std::chrono::steady_clock::time_point start_;
};

inline SessionResult run_threaded(Market& market, const SessionConfig& cfg) {
    std::atomic<bool> stop{false};
    VirtualClock clock(cfg.time_scale);

    std::thread consumer([&] {
        while (!stop.load() || market.lob().pending() > 0) {
            if (market.lob().wait_for_message(std::chrono::milliseconds(1))) market.drain();
        }
    });

    std::vector<std::thread> traders;
    traders.reserve(market.trader_count());
    {
        // The first assignments go out before any trader starts quoting.
        market.issue(0.0);
    }
    std::thread issuer([&] {
        for (double t = cfg.issue_interval; t < cfg.duration; t += cfg.issue_interval) {
            clock.sleep_until(t);
            market.issue(t);
        }
    });
    for (std::size_t i = 0; i < market.trader_count(); ++i) {
        traders.emplace_back([&, i] {
            const auto pause = clock.wall(cfg.tick);
            for (;;) {
                const double t = clock.now();
                if (t >= cfg.duration) return;
                market.poll(i, t);
                std::this_thread::sleep_for(pause);
            }
        });
    }
    for (auto& t : traders) t.join();
    issuer.join();
    stop.store(true);
    consumer.join();
    market.drain();
    return market.finish();
}

}  // namespace detail

/// Runs one session. `model` is required iff any trader is DTX.
inline SessionResult run_session(const SessionConfig& config,
                                 std::shared_ptr<const nn::ModelParams> model = nullptr) {
    detail::Market market(config, std::move(model));
    if (config.mode == Mode::Lockstep) return detail::run_lockstep(market, config);
    return detail::run_threaded(market, config);
}

}  // namespace cdasim
