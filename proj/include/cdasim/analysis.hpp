#pragma once

// Wilcoxon signed-rank test, box-plot summaries, and the report bundle written from a
// trials file.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdasim/experiments.hpp"
#include "cdasim/util/format.hpp"

namespace cdasim {

enum class WilcoxonMethod : std::uint8_t { Exact, NormalApprox };

inline std::string_view to_string(WilcoxonMethod m) { return m == WilcoxonMethod::Exact ? "exact" : "normal-approx"; }

struct WilcoxonResult {
    double w_statistic = 0.0;  // min(W+, W-)
    double w_plus = 0.0;
    double p_value = 1.0;  // two-sided
    int n_effective = 0;
    WilcoxonMethod method = WilcoxonMethod::Exact;
};

inline constexpr int kExactWilcoxonLimit = 25;

/// Average ranks (1-based) of |d| over the nonzero differences.
inline std::vector<double> signed_rank_magnitudes(std::span<const double> nonzero) {
    const std::size_t n = nonzero.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(nonzero[a]) < std::abs(nonzero[b]); });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(nonzero[idx[j + 1]]) == std::abs(nonzero[idx[i]])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }
    return rank;
}

/// Two-sided test on the differences a - b. Zero differences are dropped; ties in |d| get
/// average ranks. For up to 25 nonzero differences p is the exact probability, under random
/// signs, of a W+ at least as far from its mean as the observed one; otherwise a normal
/// approximation with tie-corrected variance and continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
    std::vector<double> d;
    for (double x : differences)
        if (x != 0.0) d.push_back(x);
    if (d.empty()) throw std::invalid_argument("wilcoxon: all differences are zero");
    const auto rank = signed_rank_magnitudes(d);
    const int n = static_cast<int>(d.size());

    WilcoxonResult r;
    r.n_effective = n;
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        total += rank[i];
        if (d[i] > 0) r.w_plus += rank[i];
    }
    r.w_statistic = std::min(r.w_plus, total - r.w_plus);

    if (n <= kExactWilcoxonLimit) {
        r.method = WilcoxonMethod::Exact;
        // Ranks are multiples of 1/2, so doubled ranks are integers.
        std::vector<long> twice(d.size());
        long sum2 = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            twice[i] = std::lround(2.0 * rank[i]);
            sum2 += twice[i];
        }
        std::vector<double> count(static_cast<std::size_t>(sum2) + 1, 0.0);
        count[0] = 1.0;
        long reach = 0;
        for (long t : twice) {
            for (long s = reach; s >= 0; --s)
                if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + t)] += count[static_cast<std::size_t>(s)];
            reach += t;
        }
        const long observed = std::labs(2 * std::lround(2.0 * r.w_plus) - sum2);
        double hits = 0.0;
        for (long s = 0; s <= sum2; ++s)
            if (std::labs(2 * s - sum2) >= observed) hits += count[static_cast<std::size_t>(s)];
        r.p_value = std::min(1.0, hits / std::ldexp(1.0, n));
    } else {
        r.method = WilcoxonMethod::NormalApprox;
        const double nn = n;
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        std::vector<double> sorted = rank;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i);
            var -= (t * t * t - t) / 48.0;
            i = j;
        }
        if (var <= 0.0) {
            r.p_value = 1.0;
        } else {
            const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / std::sqrt(var);
            r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
        }
    }
    return r;
}

inline WilcoxonResult wilcoxon_signed_rank(const PairedObservations& pairs) {
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& t : pairs) d.push_back(t.ppt_a - t.ppt_b);
    return wilcoxon_signed_rank(d);
}

struct BoxStats {
    double q1 = 0, median = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0;
    double mean = 0;
    std::size_t n = 0;
    std::vector<double> outliers;
};

/// Linear-interpolation quantile at h = (n - 1) p over sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty series");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Whiskers reach the most extreme data within 1.5 IQR of the box; the rest are outliers.
inline BoxStats box_stats(std::span<const double> series) {
    if (series.empty()) throw std::invalid_argument("box_stats: empty series");
    std::vector<double> s(series.begin(), series.end());
    std::sort(s.begin(), s.end());
    BoxStats b;
    b.n = s.size();
    b.q1 = quantile_sorted(s, 0.25);
    b.median = quantile_sorted(s, 0.5);
    b.q3 = quantile_sorted(s, 0.75);
    b.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    const double iqr = b.q3 - b.q1;
    const double lo_fence = b.q1 - 1.5 * iqr;
    const double hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    for (double x : s) {
        if (x < lo_fence || x > hi_fence) {
            b.outliers.push_back(x);
            continue;
        }
        b.whisker_low = std::min(b.whisker_low, x);
        b.whisker_high = std::max(b.whisker_high, x);
    }
    return b;
}

inline void write_box_csv(std::ostream& out, const BoxStats& b) {
    out << "n,mean,q1,median,q3,whisker_low,whisker_high,outliers\n";
    out << b.n << ',' << util::format_double(b.mean) << ',' << util::format_double(b.q1) << ','
        << util::format_double(b.median) << ',' << util::format_double(b.q3) << ',' << util::format_double(b.whisker_low)
        << ',' << util::format_double(b.whisker_high) << ',';
    for (std::size_t i = 0; i < b.outliers.size(); ++i) out << (i ? ";" : "") << util::format_double(b.outliers[i]);
    out << '\n';
}

/// One row per trial; `diagonal` is the y = x reference evaluated at ppt_a.
inline void write_scatter_csv(std::ostream& out, const PairedObservations& obs) {
    out << "trial,ppt_a,ppt_b,diagonal\n";
    for (const auto& t : obs)
        out << t.trial << ',' << util::format_double(t.ppt_a) << ',' << util::format_double(t.ppt_b) << ','
            << util::format_double(t.ppt_a) << '\n';
}

inline constexpr double kSignificance = 0.05;

struct Report {
    BoxStats box_a, box_b;
    std::optional<WilcoxonResult> test;  // empty when every difference is zero
    std::string verdict;
};

inline Report analyse(const PairedObservations& obs) {
    if (obs.empty()) throw std::invalid_argument("report: no trials");
    std::vector<double> a, b;
    for (const auto& t : obs) {
        a.push_back(t.ppt_a);
        b.push_back(t.ppt_b);
    }
    Report r;
    r.box_a = box_stats(a);
    r.box_b = box_stats(b);
    r.verdict = "no significant difference";
    bool any_difference = false;
    for (const auto& t : obs) any_difference = any_difference || t.ppt_a != t.ppt_b;
    if (any_difference) {
        r.test = wilcoxon_signed_rank(obs);
        if (r.test->p_value < kSignificance) r.verdict = r.box_a.mean > r.box_b.mean ? "A dominates" : "B dominates";
    }
    return r;
}

inline void write_summary(std::ostream& out, const Report& r) {
    auto g = [](double v) { return util::format_sig(v, 6); };
    out << "n = " << r.box_a.n << '\n'
        << "mean_a = " << g(r.box_a.mean) << '\n'
        << "mean_b = " << g(r.box_b.mean) << '\n';
    if (r.test) {
        out << "n_effective = " << r.test->n_effective << '\n'
            << "W = " << g(r.test->w_statistic) << '\n'
            << "p = " << g(r.test->p_value) << '\n'
            << "method = " << to_string(r.test->method) << '\n';
    } else {
        out << "n_effective = 0\nW = NA\np = NA\nmethod = NA\n";
    }
    out << "alpha = " << g(kSignificance) << '\n' << "verdict = " << r.verdict << '\n';
}

/// Reads `trials_csv` and writes box_a.csv, box_b.csv, scatter.csv and summary.txt into `out_dir`.
inline Report report(const std::filesystem::path& trials_csv, const std::filesystem::path& out_dir) {
    const PairedObservations obs = read_trials_csv(trials_csv);
    const Report r = analyse(obs);
    std::filesystem::create_directories(out_dir);
    auto open = [&](const char* name) {
        std::ofstream f(out_dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
        return f;
    };
    {
        auto f = open("box_a.csv");
        write_box_csv(f, r.box_a);
    }
    {
        auto f = open("box_b.csv");
        write_box_csv(f, r.box_b);
    }
    {
        auto f = open("scatter.csv");
        write_scatter_csv(f, obs);
    }
    {
        auto f = open("summary.txt");
        write_summary(f, r);
    }
    return r;
}

}  // namespace cdasim
