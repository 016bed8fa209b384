#pragma once

// Level-2 snapshot features: the 14-field record taken at every trade, plus
// the equilibrium-price estimate and Smith's alpha used inside it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cdasim/exchange.hpp"
#include "cdasim/util/csv.hpp"
#include "cdasim/util/format.hpp"

namespace cdasim {

inline constexpr std::size_t kRecordFields = 14;
inline constexpr std::size_t kInputFields = 13;
inline constexpr std::size_t kTargetField = 13;

inline constexpr std::array<std::string_view, kRecordFields> kRecordFieldNames = {
    "t", "otype", "limit", "mid", "micro", "imbal", "spread", "bb", "ba", "dt", "qty", "pstar", "alpha", "price"};

/// Weight on the accumulated estimate in the P* moving average.
inline constexpr double kPStarMemory = 0.95;

using InputVector = std::array<double, kInputFields>;
using RecordVector = std::array<double, kRecordFields>;

struct FeatureRecord {
    double t = 0.0;
    double order_type = 0.0;  // 0 bid, 1 ask
    double limit_price = 0.0;
    double midprice = 0.0;
    double microprice = 0.0;
    double imbalance = 0.0;
    double spread = 0.0;
    double best_bid = 0.0;
    double best_ask = 0.0;
    double dt_last_trade = 0.0;
    double total_quotes = 0.0;
    double p_star = 0.0;
    double alpha = 0.0;
    double trade_price = 0.0;

    RecordVector to_array() const {
        return {t,        order_type, limit_price,   midprice,     microprice, imbalance, spread,
                best_bid, best_ask,   dt_last_trade, total_quotes, p_star,     alpha,     trade_price};
    }

    static FeatureRecord from_array(const RecordVector& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[11], a[12], a[13]};
    }

    InputVector inputs() const {
        auto a = to_array();
        InputVector x;
        std::copy_n(a.begin(), kInputFields, x.begin());
        return x;
    }

    bool operator==(const FeatureRecord&) const = default;
};

struct NormStats {
    RecordVector min{};
    RecordVector max{};

    bool operator==(const NormStats&) const = default;
};

// ---------------------------------------------------------------------------
// Book-level features

inline double midprice(const LobSummary& s) {
    if (s.best_bid && s.best_ask) return (static_cast<double>(*s.best_bid) + static_cast<double>(*s.best_ask)) / 2.0;
    if (s.best_bid) return static_cast<double>(*s.best_bid);
    if (s.best_ask) return static_cast<double>(*s.best_ask);
    if (s.last_trade) return static_cast<double>(s.last_trade->price);
    return 0.0;
}

inline double microprice(const LobSummary& s) {
    if (!(s.best_bid && s.best_ask)) return midprice(s);
    const auto qb = static_cast<double>(s.qty_at_best_bid);
    const auto qa = static_cast<double>(s.qty_at_best_ask);
    if (qb + qa <= 0.0) return midprice(s);
    return (static_cast<double>(*s.best_bid) * qa + static_cast<double>(*s.best_ask) * qb) / (qb + qa);
}

inline double imbalance(const LobSummary& s) {
    const auto total = s.bid_qty_total + s.ask_qty_total;
    if (total == 0) return 0.0;
    return static_cast<double>(s.bid_qty_total - s.ask_qty_total) / static_cast<double>(total);
}

/// Best ask minus best bid; 0 when either side is missing.
inline double spread(const LobSummary& s) {
    if (!(s.best_bid && s.best_ask)) return 0.0;
    return static_cast<double>(*s.best_ask - *s.best_bid);
}

/// Missing best prices fall back to the midprice fallback chain.
inline double best_bid_or_fallback(const LobSummary& s) {
    return s.best_bid ? static_cast<double>(*s.best_bid) : midprice(s);
}

inline double best_ask_or_fallback(const LobSummary& s) {
    return s.best_ask ? static_cast<double>(*s.best_ask) : midprice(s);
}

// ---------------------------------------------------------------------------
// Equilibrium estimate and Smith's alpha

/// EWMA of trade prices seeded with the first trade; midprice before any trade.
inline double estimate_p_star(std::span<const Trade> tape, const std::optional<LobSummary>& current = std::nullopt) {
    if (tape.empty()) return current ? midprice(*current) : 0.0;
    double est = static_cast<double>(tape.front().price);
    for (std::size_t i = 1; i < tape.size(); ++i)
        est = kPStarMemory * est + (1.0 - kPStarMemory) * static_cast<double>(tape[i].price);
    return est;
}

inline double smith_alpha_prices(std::span<const double> prices, double p_star) {
    if (prices.empty()) return 0.0;
    if (!(p_star > 0.0)) throw std::invalid_argument("smith_alpha: equilibrium estimate must be positive");
    double ss = 0.0;
    for (double p : prices) ss += (p - p_star) * (p - p_star);
    return (100.0 / p_star) * std::sqrt(ss / static_cast<double>(prices.size()));
}

/// Root-mean-square deviation of trade prices from `p_star`, as a percentage of `p_star`.
inline double smith_alpha(std::span<const Trade> window, double p_star) {
    if (window.empty()) return 0.0;
    if (!(p_star > 0.0)) throw std::invalid_argument("smith_alpha: equilibrium estimate must be positive");
    double ss = 0.0;
    for (const auto& t : window) {
        const double d = static_cast<double>(t.price) - p_star;
        ss += d * d;
    }
    return (100.0 / p_star) * std::sqrt(ss / static_cast<double>(window.size()));
}

/// Incremental form of the tape-derived features, for live traders that see the tape
/// one trade at a time. Values are identical to the batch functions above.
class TapeTracker {
  public:
    void add(const Trade& t) { add(t.price, t.time); }

    void add(Price price, double time) {
        const auto p = static_cast<double>(price);
        p_star_ = prices_.empty() ? p : kPStarMemory * p_star_ + (1.0 - kPStarMemory) * p;
        prices_.push_back(p);
        last_time_ = time;
        alpha_ = smith_alpha_prices(prices_, p_star_);
    }

    std::size_t count() const noexcept { return prices_.size(); }
    std::optional<double> last_trade_time() const {
        if (prices_.empty()) return std::nullopt;
        return last_time_;
    }
    double p_star(const LobSummary& current) const { return prices_.empty() ? midprice(current) : p_star_; }
    double alpha() const noexcept { return alpha_; }

  private:
    std::vector<double> prices_;
    double p_star_ = 0.0;
    double last_time_ = 0.0;
    double alpha_ = 0.0;
};

/// The 13 model inputs for a trader on `side` with limit `limit` at time `now`.
/// `last_trade_time` is absent before the first trade (dt then equals `now`).
inline InputVector make_inputs(const LobSummary& s, Side side, Price limit, double now,
                               std::optional<double> last_trade_time, double p_star, double alpha) {
    return {now,
            side == Side::Bid ? 0.0 : 1.0,
            static_cast<double>(limit),
            midprice(s),
            microprice(s),
            imbalance(s),
            spread(s),
            best_bid_or_fallback(s),
            best_ask_or_fallback(s),
            now - last_trade_time.value_or(0.0),
            static_cast<double>(s.bid_qty_total + s.ask_qty_total),
            p_star,
            alpha};
}

/// Snapshot for `trade`. `s` is the book the aggressor saw (just before matching) and
/// `prior_tape` the trades that preceded this one; `side`/`limit` belong to the trader
/// whose quote initiated the trade.
inline FeatureRecord make_record(const LobSummary& s, std::span<const Trade> prior_tape, Side side, Price limit,
                                 const Trade& trade) {
    const double p_star = estimate_p_star(prior_tape, s);
    const double alpha = prior_tape.empty() ? 0.0 : smith_alpha(prior_tape, p_star);
    std::optional<double> last_time;
    if (!prior_tape.empty()) last_time = prior_tape.back().time;
    auto x = make_inputs(s, side, limit, trade.time, last_time, p_star, alpha);
    RecordVector a;
    std::copy(x.begin(), x.end(), a.begin());
    a[kTargetField] = static_cast<double>(trade.price);
    return FeatureRecord::from_array(a);
}

// ---------------------------------------------------------------------------
// Min-max normalisation

inline double normalize_value(double x, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
}

inline RecordVector normalize(const FeatureRecord& r, const NormStats& stats) {
    auto a = r.to_array();
    for (std::size_t i = 0; i < kRecordFields; ++i) a[i] = normalize_value(a[i], stats.min[i], stats.max[i]);
    return a;
}

inline InputVector normalize_inputs(const InputVector& x, const NormStats& stats) {
    InputVector out;
    for (std::size_t i = 0; i < kInputFields; ++i) out[i] = normalize_value(x[i], stats.min[i], stats.max[i]);
    return out;
}

inline double normalize_target(double price, const NormStats& stats) {
    return normalize_value(price, stats.min[kTargetField], stats.max[kTargetField]);
}

/// Inverse of the target-field map, rounded to ticks. Unclamped: model outputs may leave [0,1].
inline Price denormalize_price(double y, const NormStats& stats) {
    const double lo = stats.min[kTargetField];
    const double hi = stats.max[kTargetField];
    const double p = hi > lo ? lo + y * (hi - lo) : lo;
    if (!std::isfinite(p)) return 0;
    return static_cast<Price>(std::llround(std::clamp(p, -1e15, 1e15)));
}

/// Per-field min/max over `records`. Throws on an empty input.
inline NormStats fit_norm_stats(std::span<const FeatureRecord> records) {
    if (records.empty()) throw std::invalid_argument("fit_norm_stats: no records");
    NormStats s;
    s.min.fill(std::numeric_limits<double>::infinity());
    s.max.fill(-std::numeric_limits<double>::infinity());
    for (const auto& r : records) {
        auto a = r.to_array();
        for (std::size_t i = 0; i < kRecordFields; ++i) {
            s.min[i] = std::min(s.min[i], a[i]);
            s.max[i] = std::max(s.max[i], a[i]);
        }
    }
    return s;
}

inline void merge_norm_stats(NormStats& into, const NormStats& other) {
    for (std::size_t i = 0; i < kRecordFields; ++i) {
        into.min[i] = std::min(into.min[i], other.min[i]);
        into.max[i] = std::max(into.max[i], other.max[i]);
    }
}

// ---------------------------------------------------------------------------
// Files

inline void write_records_csv(std::ostream& out, std::span<const FeatureRecord> records) {
    for (std::size_t i = 0; i < kRecordFields; ++i) out << (i ? "," : "") << kRecordFieldNames[i];
    out << '\n';
    for (const auto& r : records) {
        auto a = r.to_array();
        for (std::size_t i = 0; i < kRecordFields; ++i) out << (i ? "," : "") << util::format_double(a[i]);
        out << '\n';
    }
}

inline std::vector<FeatureRecord> read_records_csv(std::istream& in, const std::string& source = "<stream>") {
    util::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw util::ParseError(source, 1, "missing header");
    auto header = util::split(line);
    if (header.size() != kRecordFields) throw util::ParseError(source, 1, "expected 14 columns");
    for (std::size_t i = 0; i < kRecordFields; ++i)
        if (util::trim(header[i]) != kRecordFieldNames[i])
            throw util::ParseError(source, 1, "unexpected column '" + std::string(header[i]) + "'");
    std::vector<FeatureRecord> out;
    while (reader.next(line)) {
        if (util::trim(line).empty()) continue;
        auto cells = util::split(line);
        if (cells.size() != kRecordFields)
            throw util::ParseError(source, reader.line_no(), "expected 14 columns, got " + std::to_string(cells.size()));
        RecordVector a;
        for (std::size_t i = 0; i < kRecordFields; ++i)
            if (!util::parse_double(cells[i], a[i]))
                throw util::ParseError(source, reader.line_no(), "bad number '" + std::string(cells[i]) + "'");
        out.push_back(FeatureRecord::from_array(a));
    }
    return out;
}

inline std::vector<FeatureRecord> read_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_records_csv(in, path.string());
}

/// NormStats text: one `field,min,max` row per field, in record order.
inline void write_norm_stats(std::ostream& out, const NormStats& s) {
    for (std::size_t i = 0; i < kRecordFields; ++i)
        out << kRecordFieldNames[i] << ',' << util::format_double(s.min[i]) << ',' << util::format_double(s.max[i])
            << '\n';
}

inline NormStats read_norm_stats(std::istream& in, const std::string& source = "<stream>") {
    util::LineReader reader(in);
    NormStats s;
    std::string line;
    std::size_t field = 0;
    while (reader.next(line)) {
        if (util::trim(line).empty()) continue;
        auto cells = util::split(line);
        if (cells.size() != 3) throw util::ParseError(source, reader.line_no(), "expected field,min,max");
        if (field >= kRecordFields) throw util::ParseError(source, reader.line_no(), "too many fields");
        if (util::trim(cells[0]) != kRecordFieldNames[field])
            throw util::ParseError(source, reader.line_no(),
                                   "expected field '" + std::string(kRecordFieldNames[field]) + "'");
        if (!util::parse_double(cells[1], s.min[field]) || !util::parse_double(cells[2], s.max[field]))
            throw util::ParseError(source, reader.line_no(), "bad number");
        if (s.min[field] > s.max[field]) throw util::ParseError(source, reader.line_no(), "min exceeds max");
        ++field;
    }
    if (field != kRecordFields) throw util::ParseError(source, reader.line_no(), "expected 14 fields");
    return s;
}

}  // namespace cdasim
