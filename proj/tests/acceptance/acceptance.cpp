// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero when any
// hard criterion fails; criterion 9 is soft and only reported.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <list>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdasim/analysis.hpp"
#include "cdasim/datagen.hpp"
#include "cdasim/experiments.hpp"
#include "cdasim/nn/adam.hpp"
#include "cdasim/nn/network.hpp"
#include "cdasim/nn/train.hpp"
#include "cdasim/session.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace cdasim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------- 1. exchange

constexpr int kStreams = 100000;
constexpr int kStreamLength = 40;
constexpr double kExchangeBudget = 30.0;

// Naive reference book: a flat list scanned linearly on every message.
struct RefBook {
    struct Rest {
        std::string trader;
        Side side;
        Price price;
        std::uint64_t seq;
    };
    std::list<Rest> rest;

    void withdraw(const std::string& trader) {
        rest.remove_if([&](const Rest& r) { return r.trader == trader; });
    }

    // Returns the trade price and the resting counterparty, if any.
    std::optional<std::pair<Price, std::string>> submit(const Order& o, std::uint64_t seq) {
        withdraw(o.trader_id);
        auto best = rest.end();
        for (auto it = rest.begin(); it != rest.end(); ++it) {
            if (it->side == o.side) continue;
            const bool crosses = o.side == Side::Bid ? o.price >= it->price : o.price <= it->price;
            if (!crosses) continue;
            if (best == rest.end()) {
                best = it;
                continue;
            }
            const bool better = o.side == Side::Bid ? it->price < best->price : it->price > best->price;
            if (better || (it->price == best->price && it->seq < best->seq)) best = it;
        }
        if (best == rest.end()) {
            rest.push_back({o.trader_id, o.side, o.price, seq});
            return std::nullopt;
        }
        auto out = std::make_pair(best->price, best->trader);
        rest.erase(best);
        return out;
    }
};

std::string check_stream(std::uint64_t seed, Price& surplus_book, Price& surplus_tape) {
    Rng rng(seed);
    const int traders = uniform_int<int>(rng, 2, 8);
    Lob lob;
    RefBook ref;
    std::vector<std::string> ids;
    for (int i = 0; i < traders; ++i) {
        ids.push_back("T" + std::to_string(i));
        lob.register_trader(ids.back());
    }
    double t = 0, last_tape = 0;
    std::uint64_t seq = 0;
    for (int k = 0; k < kStreamLength; ++k) {
        const auto& who = ids[static_cast<std::size_t>(uniform_int<int>(rng, 0, traders - 1))];
        t += uniform_int<int>(rng, 0, 3) * 0.25;  // repeated timestamps on purpose
        if (uniform_int<int>(rng, 0, 9) == 0) {
            lob.enqueue_withdraw(who);
            lob.process_next();
            ref.withdraw(who);
        } else {
            Order o;
            o.trader_id = who;
            o.side = uniform_int<int>(rng, 0, 1) ? Side::Bid : Side::Ask;
            o.price = uniform_int<Price>(rng, 95, 105);
            o.submit_time = t;
            if (!lob.enqueue(o).accepted()) return "valid order rejected";
            const auto got = lob.process_next();
            const auto want = ref.submit(o, ++seq);
            if (got.trades.size() != (want ? 1u : 0u)) return "trade count differs from reference";
            if (want) {
                const Trade& tr = got.trades.front();
                if (tr.price != want->first) return "trade price differs from reference";
                const auto& counter = o.side == Side::Bid ? tr.seller_id : tr.buyer_id;
                if (counter != want->second) return "FIFO: matched a different resting order";
                if (tr.time != std::max(t, last_tape)) return "trade time";
                last_tape = tr.time;
                // Surplus of the pair at their own quotes must equal what the tape splits.
                const Price bid = o.side == Side::Bid ? o.price : want->first;
                const Price ask = o.side == Side::Ask ? o.price : want->first;
                surplus_book += bid - ask;
                surplus_tape += (bid - tr.price) + (tr.price - ask);
            }
        }
        const auto s = lob.summary();
        if (s.best_bid && s.best_ask && *s.best_bid >= *s.best_ask) return "crossed book at rest";
        if (lob.resting_orders().size() != ref.rest.size()) return "resting count differs from reference";
    }
    return {};
}

Outcome criterion_exchange() {
    const auto t0 = Clock::now();
    Price book = 0, tape = 0;
    for (int s = 1; s <= kStreams; ++s)
        if (auto err = check_stream(static_cast<std::uint64_t>(s), book, tape); !err.empty())
            return {false, "stream " + std::to_string(s) + ": " + err};
    const double dt = seconds_since(t0);
    std::ostringstream d;
    d << kStreams << " streams x " << kStreamLength << " msgs in " << util::format_sig(dt, 3) << " s, surplus "
      << book << " == " << tape;
    return {dt < kExchangeBudget && book == tape, d.str()};
}

// ---------------------------------------------------------------- 2. no loss

constexpr int kNoLossSessions = 100;

Outcome criterion_no_loss() {
    const auto schedules = spread_subset(enumerate_schedules(), kNoLossSessions);
    std::size_t trades = 0, bad = 0;
    for (int k = 0; k < kNoLossSessions; ++k) {
        SessionConfig c;
        c.seed = 1000 + static_cast<std::uint64_t>(k);
        c.buyers = c.sellers = population_of(schedules[static_cast<std::size_t>(k)]);
        c.record_snapshots = false;
        const auto r = run_session(c);
        for (const auto& t : r.tape) {
            const auto& b = r.assignments.at(t.buyer_id).at(t.buy_tag - 1);
            const auto& s = r.assignments.at(t.seller_id).at(t.sell_tag - 1);
            if (t.price > b.limit_price || t.price < s.limit_price) ++bad;
        }
        trades += r.tape.size();
        bad += r.limit_violations;
    }
    return {bad == 0, std::to_string(kNoLossSessions) + " sessions, " + std::to_string(trades) + " trades, " +
                          std::to_string(bad) + " limit violations"};
}

// ---------------------------------------------------------------- 3. schedules

constexpr std::size_t kExpectedSchedules = 270;

std::size_t multiset_permutations(const ProportionTuple& t) {
    std::map<int, int> mult;
    for (int v : t) ++mult[v];
    double r = std::tgamma(static_cast<double>(t.size()) + 1);
    for (const auto& [v, k] : mult) r /= std::tgamma(k + 1.0);
    return static_cast<std::size_t>(std::llround(r));
}

Outcome criterion_schedules() {
    const auto all = enumerate_schedules();
    const std::set<ProportionTuple> unique(all.begin(), all.end());
    std::size_t oracle_total = 0;
    bool per_tuple = true;
    for (const auto& base : default_proportion_bases()) {
        const auto n = multiset_permutations(base);
        oracle_total += n;
        per_tuple = per_tuple && enumerate_schedules({base}).size() == n;
    }
    return {all.size() == kExpectedSchedules && unique.size() == kExpectedSchedules && per_tuple,
            std::to_string(unique.size()) + " unique, oracle sum " + std::to_string(oracle_total) +
                (per_tuple ? ", per-tuple counts match" : ", per-tuple mismatch")};
}

// ---------------------------------------------------------------- 4. snapshot volume

constexpr int kVolumeSeeds = 20;
constexpr double kVolumeTarget = 1100, kVolumeTolerance = 0.5;

Outcome criterion_volume() {
    const auto schedules = spread_subset(enumerate_schedules(), kVolumeSeeds);
    double rows = 0;
    for (int k = 0; k < kVolumeSeeds; ++k) {
        SessionConfig c;
        c.seed = static_cast<std::uint64_t>(k + 1);
        c.buyers = c.sellers = population_of(schedules[static_cast<std::size_t>(k)]);
        rows += static_cast<double>(run_session(c).snapshots.size());
    }
    const double mean = rows / kVolumeSeeds;
    const double lo = kVolumeTarget * (1 - kVolumeTolerance), hi = kVolumeTarget * (1 + kVolumeTolerance);
    return {mean >= lo && mean <= hi, "mean " + util::format_sig(mean, 6) + " rows/session, band [" +
                                          util::format_sig(lo, 4) + ", " + util::format_sig(hi, 4) + "]"};
}

// ---------------------------------------------------------------- 5. gradients

constexpr int kGradDraws = 20;
constexpr double kGradTolerance = 1e-4, kGradBudget = 10.0;

double fd_worst(std::uint64_t seed) {
    Rng rng(seed * 7919);
    const int seq_len = 1 + static_cast<int>(seed % 4);
    const std::size_t batch = 1 + seed % 5;
    nn::ModelParams m = nn::init_model(seed, seq_len);
    for (auto& layer : m.dense)
        for (double& b : layer.b) b = uniform_real(rng, 0.1, 0.5);
    std::vector<std::vector<InputVector>> windows(batch, std::vector<InputVector>(static_cast<std::size_t>(seq_len)));
    std::vector<nn::Sample> samples;
    for (auto& w : windows) {
        for (auto& x : w)
            for (double& v : x) v = uniform_real(rng, 0.0, 1.0);
        samples.push_back({w, uniform_real(rng, 0.0, 1.0)});
    }
    const auto analytic = nn::flatten(nn::backward(m, samples).grad);
    auto theta = nn::flatten(m);
    double worst = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        // Five-point stencil: plain central differences at h = 1e-6 carry ~1e-9 of
        // round-off, which swamps gradients near 1e-7.
        const double keep = theta[i], h = 1e-4;
        auto loss_at = [&](double delta) {
            theta[i] = keep + delta;
            nn::unflatten(m, theta);
            return nn::batch_mse(m, samples);
        };
        const double num = (-loss_at(2 * h) + 8 * loss_at(h) - 8 * loss_at(-h) + loss_at(-2 * h)) / (12 * h);
        theta[i] = keep;
        nn::unflatten(m, theta);
        worst = std::max(worst, std::abs(num - analytic[i]) / std::max({std::abs(num), std::abs(analytic[i]), 1e-6}));
    }
    return worst;
}

Outcome criterion_gradients() {
    const auto t0 = Clock::now();
    double worst = 0;
    for (int s = 1; s <= kGradDraws; ++s) worst = std::max(worst, fd_worst(static_cast<std::uint64_t>(s)));
    const double dt = seconds_since(t0);
    return {worst <= kGradTolerance && dt < kGradBudget,
            "max relative error " + util::format_sig(worst, 3) + " in " + util::format_sig(dt, 3) + " s"};
}

// ---------------------------------------------------------------- 6. training

constexpr std::size_t kDeskSchedules = 10;
constexpr int kDeskTrials = 2;
constexpr std::size_t kDeskBatch = 16;
constexpr double kDeskLr = 1.5e-5;
constexpr int kDeskEpochs = 20;
constexpr double kLossRatio = 0.5, kTrainBudget = 600.0;

struct Desk {
    std::shared_ptr<const nn::ModelParams> model;
};

Outcome criterion_training(const fs::path& work, Desk& desk) {
    const auto t0 = Clock::now();
    GenPlan plan;
    plan.schedules = spread_subset(enumerate_schedules(), kDeskSchedules);
    plan.trials_per_schedule = kDeskTrials;
    plan.base_seed = 1;
    const Manifest m = generate(plan, work / "desk_corpus");

    const NormStats norm = fit_norm_stats(m);
    nn::Dataset data(1);
    for (const auto& e : m.entries) data.add_session(load_corpus_file(m, e), norm);
    nn::TrainConfig cfg;
    cfg.batch_size = kDeskBatch;
    cfg.learning_rate = kDeskLr;
    cfg.epochs = kDeskEpochs;
    cfg.seed = 1;
    const auto a = nn::train(data, norm, cfg);
    const auto b = nn::train(data, norm, cfg);
    const double dt = seconds_since(t0);
    const bool same = a.epoch_loss == b.epoch_loss && nn::flatten(a.model) == nn::flatten(b.model);
    desk.model = std::make_shared<const nn::ModelParams>(a.model);
    const double first = a.epoch_loss.front(), last = a.epoch_loss.back();
    std::ostringstream d;
    d << m.entries.size() << " sessions, " << data.size() << " samples, loss " << util::format_sig(first, 4) << " -> "
      << util::format_sig(last, 4) << " (ratio " << util::format_sig(last / first, 3) << "), "
      << (same ? "deterministic" : "NOT deterministic") << ", " << util::format_sig(dt, 3) << " s";
    return {m.entries.size() >= 20 && last <= kLossRatio * first && same && dt < kTrainBudget, d.str()};
}

// ---------------------------------------------------------------- 7. wilcoxon

constexpr double kWilcoxonTolerance = 1e-12;

double enumerate_p(const std::vector<double>& d) {
    // Midranks of |d| computed directly, independent of the library's ranking.
    const std::size_t n = d.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) ++less;
            else if (std::abs(d[j]) == std::abs(d[i])) ++equal;
        }
        rank[i] = less + (equal + 1) / 2;
    }
    double total = 0, w_plus = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank[i];
        if (d[i] > 0) w_plus += rank[i];
    }
    const double obs = std::abs(2 * w_plus - total);
    std::size_t hits = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank[i];
        if (std::abs(2 * w - total) >= obs - 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

Outcome criterion_wilcoxon() {
    Rng rng(2024);
    double worst = 0;
    int cases = 0;
    for (int n = 1; n <= 12; ++n)
        for (int rep = 0; rep < 50; ++rep) {
            const int range = rep % 2 ? 4 : 1000;  // odd reps are tie-heavy
            std::vector<double> d;
            while (static_cast<int>(d.size()) < n)
                if (int x = uniform_int<int>(rng, -range, range); x != 0) d.push_back(x);
            worst = std::max(worst, std::abs(wilcoxon_signed_rank(d).p_value - enumerate_p(d)));
            ++cases;
        }
    const std::vector<double> five = {1, 2, 3, 4, 5};
    const auto ex = wilcoxon_signed_rank(five);
    const bool example = std::abs(ex.p_value - 0.0625) < kWilcoxonTolerance && ex.w_statistic == 0;
    return {worst <= kWilcoxonTolerance && example,
            std::to_string(cases) + " cases, max |p - oracle| " + util::format_sig(worst, 3) +
                ", five positives p = " + util::format_sig(ex.p_value, 6)};
}

// ---------------------------------------------------------------- 8. convergence

constexpr int kConvergenceSessions = 50;
constexpr double kConvergenceShare = 0.8;

Outcome criterion_convergence() {
    int converged = 0;
    for (int k = 1; k <= kConvergenceSessions; ++k) {
        SessionConfig c;
        c.seed = static_cast<std::uint64_t>(k);
        c.buyers = c.sellers = {{"ZIC", 20}};
        const auto r = run_session(c);
        // Snapshot alpha is cumulative from the session start; average it within each quarter.
        const double q = c.duration / 4;
        double first = 0, last = 0;
        int n_first = 0, n_last = 0;
        for (const auto& s : r.snapshots) {
            if (s.t < q) first += s.alpha, ++n_first;
            else if (s.t >= 3 * q) last += s.alpha, ++n_last;
        }
        if (n_first && n_last && last / n_last < first / n_first) ++converged;
    }
    const double share = static_cast<double>(converged) / kConvergenceSessions;
    return {share >= kConvergenceShare, std::to_string(converged) + "/" + std::to_string(kConvergenceSessions) +
                                            " sessions with final-quarter alpha below first-quarter alpha (need " +
                                            util::format_sig(kConvergenceShare * 100, 3) + "%)"};
}

// ---------------------------------------------------------------- 9. BGT ZIC vs DTX (soft)

constexpr int kBgtTrials = 50;

Outcome criterion_reproduction(const Desk& desk) {
    if (!desk.model) return {false, "no desk model (criterion 6 did not produce one)"};
    ExperimentSpec spec;
    spec.kind = ExperimentKind::Bgt;
    spec.strategy_a = "ZIC";
    spec.strategy_b = "DTX";
    spec.trials = kBgtTrials;
    spec.seed = 1;
    const auto obs = run_experiment(spec, desk.model);
    const auto rep = analyse(obs);
    std::ostringstream d;
    d << "ZIC " << util::format_sig(rep.box_a.mean, 6) << " vs DTX " << util::format_sig(rep.box_b.mean, 6);
    if (rep.test) d << ", W = " << util::format_sig(rep.test->w_statistic, 6) << ", p = " << util::format_sig(rep.test->p_value, 4);
    d << ", " << rep.verdict;
    return {rep.box_b.mean >= rep.box_a.mean, d.str()};
}

// ---------------------------------------------------------------- 10. determinism

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing_support::slurp(e.path());
    return out;
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cdasim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cdasim::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

bool pipeline(const fs::path& dir) {
    const std::string d = dir.string();
    return run_cli({"datagen", "--take", "5", "--trials", "1", "--seed", "7", "--lockstep", "--duration", "900", "--out",
                d + "/corpus"}) == 0 &&
           run_cli({"train", "--corpus", d + "/corpus/manifest.csv", "--epochs", "3", "--batch", "16", "--seed", "7",
                "--out", d + "/model.dtx", "--loss-csv", d + "/loss.csv"}) == 0 &&
           run_cli({"experiment", "--preset", "bgt-zic", "--trials", "6", "--seed", "7", "--model", d + "/model.dtx",
                "--lockstep", "--duration", "900", "--out", d + "/exp"}) == 0 &&
           run_cli({"report", "--trials", d + "/exp/trials.csv"}) == 0;
}

Outcome criterion_determinism(const fs::path& work) {
    const auto a = work / "pipeline_a", b = work / "pipeline_b";
    if (!pipeline(a) || !pipeline(b)) return {false, "pipeline command failed"};
    const auto ta = snapshot_tree(a), tb = snapshot_tree(b);
    std::string diff;
    for (const auto& [name, body] : ta)
        if (!tb.contains(name) || tb.at(name) != body) diff += (diff.empty() ? "" : ", ") + name;
    if (ta.size() != tb.size()) diff += (diff.empty() ? "" : ", ") + std::string("file sets differ");
    return {diff.empty(), std::to_string(ta.size()) + " files" + (diff.empty() ? " byte-identical" : ", differ: " + diff)};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "cdasim_acceptance";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--workdir") work = argv[i + 1];
    fs::remove_all(work);
    fs::create_directories(work);

    Desk desk;
    struct Criterion {
        int id;
        const char* name;
        bool soft;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "exchange invariants", false, criterion_exchange},
        {2, "no-loss trades", false, criterion_no_loss},
        {3, "schedule enumeration", false, criterion_schedules},
        {4, "snapshot volume", false, criterion_volume},
        {5, "gradient check", false, criterion_gradients},
        {6, "training sanity", false, [&] { return criterion_training(work, desk); }},
        {7, "wilcoxon exactness", false, criterion_wilcoxon},
        {8, "market convergence", false, criterion_convergence},
        {9, "BGT ZIC vs DTX", true, [&] { return criterion_reproduction(desk); }},
        {10, "pipeline determinism", false, [&] { return criterion_determinism(work); }},
    };

    int hard_failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const char* tag = o.pass ? "PASS" : (c.soft ? "SOFT-FAIL" : "FAIL");
        std::printf("[%s] %2d %s: %s (%.1f s)\n", tag, c.id, c.name, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
        if (!o.pass && !c.soft) ++hard_failures;
    }
    std::printf("%d hard failure(s)\n", hard_failures);
    return hard_failures == 0 ? 0 : 1;
}
