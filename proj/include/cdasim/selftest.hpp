#pragma once

// Quick invariant suites behind `cdasim selftest`: each returns a pass/fail line.

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cdasim/analysis.hpp"
#include "cdasim/datagen.hpp"
#include "cdasim/exchange.hpp"
#include "cdasim/nn/adam.hpp"
#include "cdasim/nn/model_io.hpp"
#include "cdasim/nn/network.hpp"
#include "cdasim/session.hpp"

namespace cdasim {

struct CheckResult {
    std::string name;
    bool ok = false;
    std::string detail;
};

/// Feeds `orders` random unit orders from `traders` traders through a fresh book, checking
/// after every message that the book is uncrossed, every level is in time order, and each
/// trade is at the resting price and inside both quotes. Returns an empty string on success.
inline std::string check_order_stream(std::uint64_t seed, int orders, int traders = 8) {
    Rng rng(seed);
    Lob lob;
    std::vector<std::string> ids;
    for (int i = 0; i < traders; ++i) {
        ids.push_back("T" + std::to_string(i));
        lob.register_trader(ids.back());
    }
    double t = 0.0;
    for (int k = 0; k < orders; ++k) {
        t += uniform_real(rng, 0.0, 1.0);
        Order o;
        o.trader_id = ids[static_cast<std::size_t>(uniform_int<int>(rng, 0, traders - 1))];
        o.side = uniform_int<int>(rng, 0, 1) ? Side::Bid : Side::Ask;
        o.price = uniform_int<Price>(rng, 90, 110);
        o.submit_time = t;
        if (!lob.enqueue(o).accepted()) return "valid order rejected";
        const Processed r = lob.process_next();
        for (const auto& tr : r.trades) {
            const Order& in = *r.incoming;
            if (in.side == Side::Bid && tr.price > in.price) return "buyer paid above its bid";
            if (in.side == Side::Ask && tr.price < in.price) return "seller received below its ask";
            if (tr.resting_side == in.side) return "trade against own side";
        }
        const LobSummary s = lob.summary();
        if (s.best_bid && s.best_ask && *s.best_bid >= *s.best_ask) return "crossed book at rest";
        const auto resting = lob.resting_orders();
        for (std::size_t i = 1; i < resting.size(); ++i) {
            const Order& a = resting[i - 1];
            const Order& b = resting[i];
            if (a.side == b.side && a.price == b.price &&
                (a.submit_time > b.submit_time || (a.submit_time == b.submit_time && a.order_id > b.order_id)))
                return "time priority violated";
        }
    }
    return {};
}

/// Largest relative difference between BPTT and central-difference gradients for a random
/// model and batch.
inline double gradient_check_error(std::uint64_t seed, int seq_len = 3, std::size_t batch_size = 4) {
    Rng rng(seed);
    nn::ModelParams m = nn::init_model(seed, seq_len);
    // Nudge biases so ReLU units sit away from their kinks.
    for (auto& layer : m.dense)
        for (double& b : layer.b) b = uniform_real(rng, 0.1, 0.5);
    std::vector<std::vector<InputVector>> windows(batch_size, std::vector<InputVector>(static_cast<std::size_t>(seq_len)));
    std::vector<nn::Sample> batch;
    for (auto& w : windows) {
        for (auto& x : w)
            for (double& v : x) v = uniform_real(rng, 0.0, 1.0);
        batch.push_back({w, uniform_real(rng, 0.0, 1.0)});
    }
    const nn::Gradients g = nn::backward(m, batch);
    const auto analytic = nn::flatten(g.grad);
    auto theta = nn::flatten(m);
    // Fourth-order stencil keeps round-off near 1e-11 for O(1) losses.
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        auto loss_at = [&](double delta) {
            theta[i] = keep + delta;
            nn::unflatten(m, theta);
            return nn::batch_mse(m, batch);
        };
        const double numeric = (-loss_at(2 * h) + 8 * loss_at(h) - 8 * loss_at(-h) + loss_at(-2 * h)) / (12.0 * h);
        theta[i] = keep;
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    nn::unflatten(m, theta);
    return worst;
}

inline std::vector<CheckResult> run_selftest() {
    std::vector<CheckResult> out;
    auto add = [&](std::string name, const std::function<std::string()>& fn) {
        CheckResult c{std::move(name), false, {}};
        try {
            c.detail = fn();
            c.ok = c.detail.empty();
        } catch (const std::exception& e) {
            c.detail = std::string("exception: ") + e.what();
        }
        if (c.ok) c.detail = "ok";
        out.push_back(std::move(c));
    };

    add("exchange order streams", [] {
        for (std::uint64_t s = 1; s <= 200; ++s)
            if (auto err = check_order_stream(s, 200); !err.empty()) return "seed " + std::to_string(s) + ": " + err;
        return std::string();
    });
    add("schedule enumeration", [] {
        const auto n = enumerate_schedules().size();
        return n == 270 ? std::string() : "got " + std::to_string(n) + " schedules";
    });
    add("wilcoxon exact", [] {
        const std::vector<double> d = {1, 2, 3, 4, 5};
        const auto r = wilcoxon_signed_rank(d);
        return r.w_statistic == 0.0 && std::abs(r.p_value - 0.0625) < 1e-12 ? std::string()
                                                                            : "p = " + util::format_double(r.p_value);
    });
    add("gradient check", [] {
        for (std::uint64_t s = 1; s <= 3; ++s)
            if (double e = gradient_check_error(s); e > 1e-4) return "relative error " + util::format_double(e);
        return std::string();
    });
    add("model round trip", [] {
        const auto m = nn::init_model(7, 2);
        std::stringstream ss;
        nn::save_model(m, ss);
        const auto back = nn::load_model(ss);
        return nn::flatten(back) == nn::flatten(m) && back.seq_len == m.seq_len ? std::string() : "mismatch";
    });
    add("session no-loss", [] {
        SessionConfig c;
        c.duration = 600;
        c.buyers = {{"ZIC", 4}, {"ZIP", 4}, {"GDX", 4}, {"AA", 4}, {"GVWY", 4}};
        c.sellers = c.buyers;
        const auto r = run_session(c);
        if (r.tape.empty()) return std::string("no trades");
        return r.limit_violations == 0 ? std::string() : std::to_string(r.limit_violations) + " losing fills";
    });
    return out;
}

}  // namespace cdasim
