#pragma once

// Balanced-group and one-to-many experiments: population construction, batch seeding,
// and the paired per-trial PPT series.

#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdasim/nn/model.hpp"
#include "cdasim/session.hpp"
#include "cdasim/util/csv.hpp"
#include "cdasim/util/format.hpp"
#include "cdasim/util/rng.hpp"
#include "cdasim/util/workers.hpp"

namespace cdasim {

enum class ExperimentKind : std::uint8_t { Bgt, Otm };

inline std::string_view to_string(ExperimentKind k) { return k == ExperimentKind::Bgt ? "bgt" : "otm"; }

inline ExperimentKind parse_experiment_kind(std::string_view s) {
    std::string low(s);
    for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (low == "bgt") return ExperimentKind::Bgt;
    if (low == "otm") return ExperimentKind::Otm;
    throw std::invalid_argument("unknown experiment kind '" + std::string(s) + "'");
}

inline constexpr int kSeedBatch = 50;

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Bgt;
    std::string strategy_a = "ZIC";
    std::string strategy_b = "DTX";  // the defector in OTM
    int trials = 50;
    std::uint64_t seed = 1;
    SessionConfig session;  // populations and seed are filled per trial
};

/// BGT: 10 A + 10 B per side. OTM: 19 A + 1 B per side.
inline Population build_population(const ExperimentSpec& spec) {
    const std::string a = canonical_strategy(spec.strategy_a);
    const std::string b = canonical_strategy(spec.strategy_b);
    if (a == b) throw std::invalid_argument("experiment strategies must differ");
    if (spec.kind == ExperimentKind::Bgt) return {{a, kTradersPerSide / 2}, {b, kTradersPerSide / 2}};
    return {{a, kTradersPerSide - 1}, {b, 1}};
}

/// Seed of trial `k`: trials are grouped in batches of 50; batch j draws its trial seeds
/// in sequence from a generator seeded with spec.seed + j.
inline std::vector<std::uint64_t> trial_seeds(std::uint64_t base_seed, int trials) {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(std::max(trials, 0)));
    Rng batch;
    for (int k = 0; k < trials; ++k) {
        if (k % kSeedBatch == 0) batch.seed(base_seed + static_cast<std::uint64_t>(k / kSeedBatch));
        out.push_back(batch());
    }
    return out;
}

struct TrialResult {
    int trial = 0;
    std::uint64_t seed = 0;
    double ppt_a = 0.0;
    double ppt_b = 0.0;
};

using PairedObservations = std::vector<TrialResult>;

/// Runs all trials. A failing session is rethrown with its trial index and seed.
inline PairedObservations run_experiment(const ExperimentSpec& spec,
                                         const std::shared_ptr<const nn::ModelParams>& model,
                                         unsigned workers = util::worker_count()) {
    if (spec.trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
    const Population pop = build_population(spec);
    const std::string a = canonical_strategy(spec.strategy_a);
    const std::string b = canonical_strategy(spec.strategy_b);
    if ((a == "DTX" || b == "DTX") && !model) throw std::invalid_argument("experiment uses DTX but no model was given");

    const auto seeds = trial_seeds(spec.seed, spec.trials);
    PairedObservations out(seeds.size());
    util::parallel_for(seeds.size(), workers, [&](std::size_t k) {
        SessionConfig cfg = spec.session;
        cfg.buyers = pop;
        cfg.sellers = pop;
        cfg.seed = seeds[k];
        cfg.record_snapshots = false;
        try {
            SessionResult r = run_session(cfg, model);
            out[k] = {static_cast<int>(k), seeds[k], r.ppt_by_strategy.at(a), r.ppt_by_strategy.at(b)};
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(k) + " (seed " + std::to_string(seeds[k]) +
                                     ") failed: " + e.what());
        }
    });
    return out;
}

inline constexpr const char* kTrialsHeader = "trial,seed,ppt_a,ppt_b";

inline void write_trials_csv(std::ostream& out, const PairedObservations& obs) {
    out << kTrialsHeader << '\n';
    for (const auto& t : obs)
        out << t.trial << ',' << t.seed << ',' << util::format_double(t.ppt_a) << ',' << util::format_double(t.ppt_b)
            << '\n';
}

inline PairedObservations read_trials_csv(std::istream& in, const std::string& source = "<stream>") {
    util::LineReader reader(in);
    std::string line;
    if (!reader.next(line) || util::trim(line) != kTrialsHeader)
        throw util::ParseError(source, reader.line_no(), std::string("expected header '") + kTrialsHeader + "'");
    PairedObservations out;
    while (reader.next(line)) {
        if (util::trim(line).empty()) continue;
        auto f = util::split(line, ',');
        if (f.size() != 4) throw util::ParseError(source, reader.line_no(), "expected 4 fields");
        TrialResult t;
        if (!util::parse_int(f[0], t.trial) || !util::parse_int(f[1], t.seed) || !util::parse_double(f[2], t.ppt_a) ||
            !util::parse_double(f[3], t.ppt_b))
            throw util::ParseError(source, reader.line_no(), "bad numeric field");
        out.push_back(t);
    }
    return out;
}

inline PairedObservations read_trials_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_trials_csv(in, path.string());
}

struct ExperimentPreset {
    const char* name;
    ExperimentKind kind;
    const char* strategy_a;
    const char* strategy_b;
};

/// DTX against each legacy adaptive strategy, in both designs.
inline const std::vector<ExperimentPreset>& experiment_presets() {
    static const std::vector<ExperimentPreset> presets = {
        {"bgt-zic", ExperimentKind::Bgt, "ZIC", "DTX"}, {"bgt-zip", ExperimentKind::Bgt, "ZIP", "DTX"},
        {"bgt-gdx", ExperimentKind::Bgt, "GDX", "DTX"}, {"bgt-aa", ExperimentKind::Bgt, "AA", "DTX"},
        {"otm-zic", ExperimentKind::Otm, "ZIC", "DTX"}, {"otm-zip", ExperimentKind::Otm, "ZIP", "DTX"},
        {"otm-gdx", ExperimentKind::Otm, "GDX", "DTX"}, {"otm-aa", ExperimentKind::Otm, "AA", "DTX"},
    };
    return presets;
}

inline const ExperimentPreset& find_preset(std::string_view name) {
    for (const auto& p : experiment_presets())
        if (name == p.name) return p;
    throw std::invalid_argument("unknown experiment preset '" + std::string(name) + "'");
}

}  // namespace cdasim
