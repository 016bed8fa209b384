#pragma once

// Training corpus generation: trader-proportion schedules, batched legacy-trader sessions,
// one snapshot CSV per session, a manifest, and the min-max statistics of the whole corpus.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdasim/features.hpp"
#include "cdasim/session.hpp"
#include "cdasim/util/csv.hpp"
#include "cdasim/util/format.hpp"
#include "cdasim/util/workers.hpp"

namespace cdasim {

/// Counts of (ZIC, ZIP, GDX, AA, GVWY) on one side of the market.
using ProportionTuple = std::array<int, 5>;

inline constexpr std::array<const char*, 5> kLegacyStrategies = {"ZIC", "ZIP", "GDX", "AA", "GVWY"};

inline const std::vector<ProportionTuple>& default_proportion_bases() {
    static const std::vector<ProportionTuple> bases = {
        {5, 5, 5, 5, 0},  {8, 4, 4, 4, 0},  {8, 8, 2, 2, 0},  {10, 4, 4, 2, 0}, {12, 4, 2, 2, 0},
        {14, 2, 2, 2, 0}, {16, 2, 2, 0, 0}, {16, 4, 0, 0, 0}, {18, 2, 0, 0, 0}, {20, 0, 0, 0, 0},
    };
    return bases;
}

/// Every distinct ordering of each base, bases in input order, orderings lexicographic.
inline std::vector<ProportionTuple> enumerate_schedules(const std::vector<ProportionTuple>& bases) {
    std::vector<ProportionTuple> out;
    std::set<ProportionTuple> seen;
    for (const auto& base : bases) {
        int sum = 0;
        for (int c : base) {
            if (c < 0) throw std::invalid_argument("proportion tuple has a negative count");
            sum += c;
        }
        if (sum != kTradersPerSide) throw std::invalid_argument("proportion tuple must sum to 20");
        ProportionTuple p = base;
        std::sort(p.begin(), p.end());
        do {
            if (seen.insert(p).second) out.push_back(p);
        } while (std::next_permutation(p.begin(), p.end()));
    }
    return out;
}

inline std::vector<ProportionTuple> enumerate_schedules() { return enumerate_schedules(default_proportion_bases()); }

/// "12-4-2-2-0"
inline std::string format_schedule(const ProportionTuple& p) {
    std::string s;
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "-" : "") + std::to_string(p[i]);
    return s;
}

inline ProportionTuple parse_schedule(std::string_view text) {
    std::vector<std::string_view> parts;
    for (auto sep : {'-', ',', ' '}) {
        parts = util::split(util::trim(text), sep);
        if (parts.size() == 5) break;
    }
    if (parts.size() != 5) throw std::invalid_argument("schedule '" + std::string(text) + "' needs five counts");
    ProportionTuple p{};
    for (std::size_t i = 0; i < 5; ++i)
        if (!util::parse_int(util::trim(parts[i]), p[i])) throw std::invalid_argument("bad count in '" + std::string(text) + "'");
    return p;
}

/// Schedule bases from a text file, one tuple per line; `#` starts a comment.
inline std::vector<ProportionTuple> read_schedule_bases(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    util::LineReader reader(in);
    std::vector<ProportionTuple> out;
    std::string line;
    while (reader.next(line)) {
        auto body = util::trim(std::string_view(line).substr(0, line.find('#')));
        if (body.empty()) continue;
        try {
            out.push_back(parse_schedule(body));
        } catch (const std::invalid_argument& e) {
            throw util::ParseError(path.string(), reader.line_no(), e.what());
        }
    }
    return out;
}

inline Population population_of(const ProportionTuple& p) {
    Population pop;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) pop.push_back({kLegacyStrategies[i], p[i]});
    return pop;
}

/// `count` schedules spread evenly over the list (all of them when count is 0 or too large).
inline std::vector<ProportionTuple> spread_subset(const std::vector<ProportionTuple>& all, std::size_t count) {
    if (count == 0 || count >= all.size()) return all;
    std::vector<ProportionTuple> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(all[k * all.size() / count]);
    return out;
}

struct GenPlan {
    std::vector<ProportionTuple> schedules;
    int trials_per_schedule = 2;
    std::uint64_t base_seed = 1;
    SessionConfig session;  // buyers, sellers and seed are overwritten per session

    std::size_t session_count() const { return schedules.size() * static_cast<std::size_t>(trials_per_schedule); }
};

struct ManifestEntry {
    std::string file;  // relative to the manifest's directory
    std::size_t rows = 0;
    std::uint64_t seed = 0;
    ProportionTuple schedule{};
    std::array<double, 5> ppt{};  // kLegacyStrategies order; 0 for absent strategies
};

struct Manifest {
    std::filesystem::path dir;
    std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestHeader = "file,rows,seed,schedule,ppt_zic,ppt_zip,ppt_gdx,ppt_aa,ppt_gvwy";
inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kNormStatsName = "norm_stats.csv";

inline void write_manifest(std::ostream& out, const Manifest& m) {
    out << kManifestHeader << '\n';
    for (const auto& e : m.entries) {
        out << e.file << ',' << e.rows << ',' << e.seed << ',' << format_schedule(e.schedule);
        for (double p : e.ppt) out << ',' << util::format_double(p);
        out << '\n';
    }
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    util::LineReader reader(in);
    const std::string source = path.string();
    Manifest m;
    m.dir = path.parent_path();
    std::string line;
    if (!reader.next(line) || util::trim(line) != kManifestHeader)
        throw util::ParseError(source, reader.line_no(), "expected manifest header");
    while (reader.next(line)) {
        if (util::trim(line).empty()) continue;
        auto f = util::split(line, ',');
        if (f.size() != 9) throw util::ParseError(source, reader.line_no(), "expected 9 fields");
        ManifestEntry e;
        e.file = std::string(f[0]);
        bool ok = util::parse_int(f[1], e.rows) && util::parse_int(f[2], e.seed);
        try {
            e.schedule = parse_schedule(f[3]);
        } catch (const std::invalid_argument& ex) {
            throw util::ParseError(source, reader.line_no(), ex.what());
        }
        for (std::size_t i = 0; i < 5; ++i) ok = ok && util::parse_double(f[4 + i], e.ppt[i]);
        if (!ok) throw util::ParseError(source, reader.line_no(), "bad numeric field");
        m.entries.push_back(std::move(e));
    }
    return m;
}

/// Runs every session of the plan and writes `session_NNNNN.csv` files plus manifest.csv
/// into `out_dir`. Session k (schedule k / trials, trial k % trials) uses seed base_seed + k.
inline Manifest generate(const GenPlan& plan, const std::filesystem::path& out_dir, unsigned workers = util::worker_count()) {
    if (plan.schedules.empty()) throw std::invalid_argument("generate: no schedules");
    if (plan.trials_per_schedule < 1) throw std::invalid_argument("generate: trials_per_schedule must be >= 1");
    {
        std::set<ProportionTuple> unique(plan.schedules.begin(), plan.schedules.end());
        if (unique.size() != plan.schedules.size()) throw std::invalid_argument("generate: duplicate schedules");
    }
    for (const auto& s : plan.schedules) (void)enumerate_schedules({s});

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    {
        const auto probe = out_dir / ".write_probe";
        std::ofstream test(probe);
        if (!test) throw std::runtime_error("output directory not writable: " + out_dir.string());
        test.close();
        std::filesystem::remove(probe, ec);
    }

    Manifest m;
    m.dir = out_dir;
    m.entries.resize(plan.session_count());
    const auto trials = static_cast<std::size_t>(plan.trials_per_schedule);
    util::parallel_for(m.entries.size(), workers, [&](std::size_t k) {
        const ProportionTuple& sched = plan.schedules[k / trials];
        SessionConfig cfg = plan.session;
        cfg.buyers = population_of(sched);
        cfg.sellers = cfg.buyers;
        cfg.seed = plan.base_seed + k;
        cfg.record_snapshots = true;
        SessionResult r = run_session(cfg);

        char name[32];
        std::snprintf(name, sizeof(name), "session_%05zu.csv", k);
        std::ofstream out(out_dir / name, std::ios::binary);
        write_records_csv(out, r.snapshots);
        if (!out) throw std::runtime_error(std::string("write failed: ") + name);

        ManifestEntry& e = m.entries[k];
        e.file = name;
        e.rows = r.snapshots.size();
        e.seed = cfg.seed;
        e.schedule = sched;
        for (std::size_t i = 0; i < 5; ++i) {
            auto it = r.ppt_by_strategy.find(kLegacyStrategies[i]);
            e.ppt[i] = it == r.ppt_by_strategy.end() ? 0.0 : it->second;
        }
    });

    std::ofstream out(out_dir / kManifestName, std::ios::binary);
    write_manifest(out, m);
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir.string());
    return m;
}

inline std::vector<FeatureRecord> load_corpus_file(const Manifest& m, const ManifestEntry& e) {
    return read_records_csv(m.dir / e.file);
}

/// Per-field min/max over every row of every listed file.
inline NormStats fit_norm_stats(const Manifest& m) {
    std::optional<NormStats> acc;
    for (const auto& e : m.entries) {
        const auto rows = load_corpus_file(m, e);
        if (rows.empty()) continue;
        const NormStats s = fit_norm_stats(std::span<const FeatureRecord>(rows));
        if (acc) merge_norm_stats(*acc, s);
        else acc = s;
    }
    if (!acc) throw std::invalid_argument("fit_norm_stats: corpus has no rows");
    return *acc;
}

}  // namespace cdasim
