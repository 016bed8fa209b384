#pragma once

// `cdasim` command line: datagen, train, experiment, report, session, selftest.
// Exit codes: 0 success, 1 usage error (synopsis on stderr), 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdasim/analysis.hpp"
#include "cdasim/datagen.hpp"
#include "cdasim/experiments.hpp"
#include "cdasim/nn/model_io.hpp"
#include "cdasim/nn/train.hpp"
#include "cdasim/selftest.hpp"
#include "cdasim/session.hpp"
#include "cdasim/util/format.hpp"
#include "cdasim/version.hpp"

namespace cdasim::cli {

namespace fs = std::filesystem;

/// Bad flag values detected after parsing; reported like parse errors.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using Header = std::vector<std::pair<std::string, std::string>>;

inline void print_header(std::ostream& out, const std::string& command, const Header& fields) {
    out << "cdasim " << kVersion << ' ' << command << '\n';
    for (const auto& [k, v] : fields) out << "  " << k << ": " << v << '\n';
}

struct SessionFlags {
    bool lockstep = false;
    double duration = 3600.0;
    double time_scale = 200.0;

    void add(CLI::App& app) {
        app.add_flag("--lockstep", lockstep, "Deterministic single-threaded scheduling");
        app.add_option("--duration", duration, "Session length in virtual seconds")->capture_default_str();
        app.add_option("--time-scale", time_scale, "Threaded mode: virtual seconds per wall second")->capture_default_str();
    }

    SessionConfig apply(SessionConfig c) const {
        c.mode = lockstep ? Mode::Lockstep : Mode::Threaded;
        c.duration = duration;
        c.time_scale = time_scale;
        return c;
    }

    void describe(Header& h) const {
        h.emplace_back("mode", lockstep ? "lockstep" : "threaded");
        h.emplace_back("duration", util::format_double(duration));
        if (!lockstep) h.emplace_back("time_scale", util::format_double(time_scale));
    }
};

inline std::shared_ptr<const nn::ModelParams> load_model_if(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_shared<const nn::ModelParams>(nn::load_model(fs::path(path)));
}

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    body(f);
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

struct DatagenArgs {
    std::string schedules = "builtin";
    std::size_t take = 0;
    int trials = 2;
    std::uint64_t seed = 1;
    std::string out;
    SessionFlags session;
};

inline int run_datagen(const DatagenArgs& a, std::ostream& out) {
    const auto bases = a.schedules == "builtin" ? default_proportion_bases() : read_schedule_bases(a.schedules);
    const auto all = enumerate_schedules(bases);
    GenPlan plan;
    plan.schedules = spread_subset(all, a.take);
    plan.trials_per_schedule = a.trials;
    plan.base_seed = a.seed;
    plan.session = a.session.apply(SessionConfig{});

    Header h = {{"seed", std::to_string(a.seed)},
                {"schedules", a.schedules + " (" + std::to_string(plan.schedules.size()) + " of " +
                                  std::to_string(all.size()) + ")"},
                {"trials_per_schedule", std::to_string(a.trials)},
                {"sessions", std::to_string(plan.session_count())},
                {"workers", std::to_string(util::worker_count())},
                {"out", a.out}};
    a.session.describe(h);
    print_header(out, "datagen", h);

    const Manifest m = generate(plan, a.out);
    const NormStats stats = fit_norm_stats(m);
    write_file(fs::path(a.out) / kNormStatsName, [&](std::ostream& f) { write_norm_stats(f, stats); });
    std::size_t rows = 0;
    for (const auto& e : m.entries) rows += e.rows;
    out << "wrote " << m.entries.size() << " sessions, " << rows << " rows, mean "
        << util::format_sig(static_cast<double>(rows) / static_cast<double>(m.entries.size()), 6) << " rows/session\n";
    return 0;
}

struct TrainArgs {
    std::string corpus;
    std::string out = "model.dtx";
    int epochs = 20;
    std::size_t batch = 16384;
    double lr = 1.5e-5;
    std::uint64_t seed = 1;
    int seq_len = 1;
    std::string loss_csv;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
    print_header(out, "train",
                 {{"seed", std::to_string(a.seed)},
                  {"mode", "lockstep"},
                  {"corpus", a.corpus},
                  {"out", a.out},
                  {"epochs", std::to_string(a.epochs)},
                  {"batch", std::to_string(a.batch)},
                  {"lr", util::format_double(a.lr)},
                  {"seq_len", std::to_string(a.seq_len)}});
    const Manifest m = read_manifest(a.corpus);
    if (m.entries.empty()) throw std::runtime_error("corpus manifest lists no sessions");
    std::vector<std::vector<FeatureRecord>> sessions;
    std::optional<NormStats> norm;
    for (const auto& e : m.entries) {
        sessions.push_back(load_corpus_file(m, e));
        if (sessions.back().empty()) continue;
        const NormStats s = fit_norm_stats(std::span<const FeatureRecord>(sessions.back()));
        if (norm) merge_norm_stats(*norm, s);
        else norm = s;
    }
    if (!norm) throw std::runtime_error("corpus has no rows");
    nn::Dataset data(a.seq_len);
    for (const auto& s : sessions) data.add_session(s, *norm);
    out << "samples: " << data.size() << '\n';

    nn::TrainConfig cfg;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.learning_rate = a.lr;
    cfg.seed = a.seed;
    cfg.seq_len = a.seq_len;
    const auto result = nn::train(data, *norm, cfg, [&](int epoch, double loss) {
        out << "epoch " << epoch << " loss " << util::format_sig(loss, 6) << '\n' << std::flush;
    });
    nn::save_model(result.model, fs::path(a.out));
    if (!a.loss_csv.empty())
        write_file(a.loss_csv, [&](std::ostream& f) {
            f << "epoch,loss\n";
            for (std::size_t i = 0; i < result.epoch_loss.size(); ++i)
                f << i + 1 << ',' << util::format_double(result.epoch_loss[i]) << '\n';
        });
    out << "saved " << a.out << '\n';
    return 0;
}

struct ExperimentArgs {
    std::string preset;
    std::string kind = "bgt";
    std::string a = "ZIC";
    std::string b = "DTX";
    int trials = 50;
    std::uint64_t seed = 1;
    std::string model;
    std::string out;
    SessionFlags session;
};

inline int run_experiment_cmd(const ExperimentArgs& a, std::ostream& out) {
    ExperimentSpec spec;
    try {
        if (!a.preset.empty()) {
            const auto& p = find_preset(a.preset);
            spec.kind = p.kind;
            spec.strategy_a = p.strategy_a;
            spec.strategy_b = p.strategy_b;
        } else {
            spec.kind = parse_experiment_kind(a.kind);
            spec.strategy_a = canonical_strategy(a.a);
            spec.strategy_b = canonical_strategy(a.b);
        }
        (void)build_population(spec);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.session = a.session.apply(SessionConfig{});
    const bool needs_model = spec.strategy_a == "DTX" || spec.strategy_b == "DTX";
    if (needs_model && a.model.empty()) throw UsageError("--model is required when DTX takes part");

    Header h = {{"seed", std::to_string(a.seed)},
                {"kind", std::string(to_string(spec.kind))},
                {"a", spec.strategy_a},
                {"b", spec.strategy_b},
                {"trials", std::to_string(a.trials)},
                {"model", a.model.empty() ? "-" : a.model},
                {"workers", std::to_string(util::worker_count())},
                {"out", a.out}};
    a.session.describe(h);
    print_header(out, "experiment", h);

    const auto model = needs_model ? load_model_if(a.model) : nullptr;
    const auto obs = run_experiment(spec, model);
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "trials.csv", [&](std::ostream& f) { write_trials_csv(f, obs); });
    double sa = 0, sb = 0;
    for (const auto& t : obs) {
        sa += t.ppt_a;
        sb += t.ppt_b;
    }
    const double n = static_cast<double>(obs.size());
    out << "mean ppt " << spec.strategy_a << ' ' << util::format_sig(sa / n, 6) << ", " << spec.strategy_b << ' '
        << util::format_sig(sb / n, 6) << '\n';
    return 0;
}

struct ReportArgs {
    std::string trials;
    std::string out;
};

inline int run_report(const ReportArgs& a, std::ostream& out) {
    const std::string dir = a.out.empty() ? fs::path(a.trials).parent_path().string() : a.out;
    print_header(out, "report", {{"trials", a.trials}, {"out", dir.empty() ? "." : dir}});
    const Report r = report(a.trials, dir.empty() ? fs::path(".") : fs::path(dir));
    write_summary(out, r);
    return 0;
}

struct SessionArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string model;
    std::string out;
    bool lockstep = false;
};

inline int run_session_cmd(const SessionArgs& a, std::ostream& out) {
    SessionConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw std::runtime_error("cannot open " + a.config);
        cfg = parse_session_config(in, a.config);
    } else {
        cfg.buyers = {{"ZIC", 4}, {"ZIP", 4}, {"GDX", 4}, {"AA", 4}, {"GVWY", 4}};
        cfg.sellers = cfg.buyers;
    }
    if (a.seed) cfg.seed = *a.seed;
    if (a.lockstep) cfg.mode = Mode::Lockstep;
    std::ostringstream resolved;
    write_session_config(resolved, cfg);
    print_header(out, "session", {{"seed", std::to_string(cfg.seed)}, {"mode", std::string(to_string(cfg.mode))}});
    out << resolved.str();

    const SessionResult r = run_session(cfg, load_model_if(a.model));
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "tape.csv", [&](std::ostream& f) { write_tape_csv(f, r.tape); });
    write_file(fs::path(a.out) / "snapshots.csv", [&](std::ostream& f) { write_snapshots_csv(f, r); });
    write_file(fs::path(a.out) / "profits.csv", [&](std::ostream& f) {
        f << "trader,strategy,profit\n";
        for (const auto& [id, p] : r.profit_by_trader) f << id << ',' << r.strategy_by_trader.at(id) << ',' << p << '\n';
    });
    out << "trades: " << r.tape.size() << '\n';
    for (const auto& [s, ppt] : r.ppt_by_strategy) out << "ppt " << s << ' ' << util::format_sig(ppt, 6) << '\n';
    return 0;
}

inline int run_selftest_cmd(std::ostream& out) {
    print_header(out, "selftest", {});
    bool all = true;
    for (const auto& c : run_selftest()) {
        out << (c.ok ? "PASS " : "FAIL ") << c.name << (c.ok ? "" : ": " + c.detail) << '\n';
        all = all && c.ok;
    }
    return all ? 0 : 2;
}

// ---------------------------------------------------------------------------

inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Continuous double auction simulator with an LSTM trader", "cdasim"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    DatagenArgs dg;
    auto* datagen = app.add_subcommand("datagen", "Generate a training corpus from legacy-trader sessions");
    datagen->add_option("--schedules", dg.schedules, "'builtin' or a file of proportion tuples")->capture_default_str();
    datagen->add_option("--take", dg.take, "Use this many schedules spread over the list (0 = all)")->capture_default_str();
    datagen->add_option("--trials", dg.trials, "Sessions per schedule")->capture_default_str()->check(CLI::PositiveNumber);
    datagen->add_option("--seed", dg.seed, "Base seed; session k uses seed + k")->capture_default_str();
    datagen->add_option("--out", dg.out, "Output directory")->required();
    dg.session.add(*datagen);

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the DTX network on a corpus");
    train->add_option("--corpus", tr.corpus, "Corpus manifest.csv")->required();
    train->add_option("--out", tr.out, "Model file")->capture_default_str();
    train->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--batch", tr.batch)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--seed", tr.seed)->capture_default_str();
    train->add_option("--seq-len", tr.seq_len, "LSTM window length")->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--loss-csv", tr.loss_csv, "Also write per-epoch loss here");

    ExperimentArgs ex;
    auto* experiment = app.add_subcommand("experiment", "Run a BGT or OTM experiment");
    experiment->add_option("--preset", ex.preset, "bgt-zic, bgt-zip, bgt-gdx, bgt-aa, otm-zic, otm-zip, otm-gdx, otm-aa");
    experiment->add_option("--kind", ex.kind, "bgt or otm")->capture_default_str();
    experiment->add_option("--a", ex.a, "Strategy A (the majority in OTM)")->capture_default_str();
    experiment->add_option("--b", ex.b, "Strategy B (the defector in OTM)")->capture_default_str();
    experiment->add_option("--trials", ex.trials)->capture_default_str()->check(CLI::PositiveNumber);
    experiment->add_option("--seed", ex.seed, "Base seed; batch j of 50 trials derives from seed + j")->capture_default_str();
    experiment->add_option("--model", ex.model, "DTX model file");
    experiment->add_option("--out", ex.out, "Output directory for trials.csv")->required();
    ex.session.add(*experiment);

    ReportArgs rp;
    auto* rep = app.add_subcommand("report", "Summarise a trials.csv");
    rep->add_option("--trials", rp.trials, "trials.csv")->required();
    rep->add_option("--out", rp.out, "Output directory (default: next to trials.csv)");

    SessionArgs ss;
    auto* session = app.add_subcommand("session", "Run one session and dump tape, snapshots and profits");
    session->add_option("--config", ss.config, "Session config file");
    session->add_option("--seed", ss.seed);
    session->add_option("--model", ss.model, "DTX model file");
    session->add_option("--out", ss.out, "Output directory")->required();
    session->add_flag("--lockstep", ss.lockstep);

    auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");

    auto synopsis = [&](const std::string& message) {
        err << "error: " << message << "\n\n";
        CLI::App* target = &app;
        for (auto* sub : app.get_subcommands()) target = sub;
        err << target->help();
        return 1;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        CLI::App* target = &app;
        for (auto* sub : app.get_subcommands()) target = sub;
        out << target->help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        return synopsis(e.what());
    }

    try {
        if (datagen->parsed()) return run_datagen(dg, out);
        if (train->parsed()) return run_train(tr, out);
        if (experiment->parsed()) return run_experiment_cmd(ex, out);
        if (rep->parsed()) return run_report(rp, out);
        if (session->parsed()) return run_session_cmd(ss, out);
        if (selftest->parsed()) return run_selftest_cmd(out);
    } catch (const UsageError& e) {
        return synopsis(e.what());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return synopsis("no subcommand");
}

}  // namespace cdasim::cli
