#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "cdasim/datagen.hpp"
#include "support.hpp"

using namespace cdasim;
using testing_support::TempDir;

namespace {

// n! / prod(k_i!) over the multiplicities of the values in `t`.
std::size_t multiset_permutations(const ProportionTuple& t) {
    std::map<int, int> mult;
    for (int v : t) ++mult[v];
    auto fact = [](int n) {
        std::size_t f = 1;
        for (int i = 2; i <= n; ++i) f *= static_cast<std::size_t>(i);
        return f;
    };
    std::size_t r = fact(static_cast<int>(t.size()));
    for (const auto& [v, k] : mult) r /= fact(k);
    return r;
}

GenPlan small_plan(std::size_t schedules, int trials, std::uint64_t seed) {
    GenPlan p;
    p.schedules = spread_subset(enumerate_schedules(), schedules);
    p.trials_per_schedule = trials;
    p.base_seed = seed;
    p.session.duration = 300;
    p.session.mode = Mode::Lockstep;
    return p;
}

}  // namespace

TEST(Schedules, DefaultBasesGive270) {
    const auto all = enumerate_schedules();
    EXPECT_EQ(all.size(), 270u);
    std::set<ProportionTuple> unique(all.begin(), all.end());
    EXPECT_EQ(unique.size(), 270u);
    for (const auto& s : all) {
        int sum = 0;
        for (int c : s) sum += c;
        EXPECT_EQ(sum, 20);
    }
}

TEST(Schedules, PerBaseCountsMatchOracle) {
    for (const auto& base : default_proportion_bases())
        EXPECT_EQ(enumerate_schedules({base}).size(), multiset_permutations(base)) << format_schedule(base);
    EXPECT_EQ(enumerate_schedules({{20, 0, 0, 0, 0}}).size(), 5u);
    EXPECT_EQ(enumerate_schedules({{8, 8, 2, 2, 0}}).size(), 30u);
}

TEST(Schedules, RejectsBadTuples) {
    EXPECT_THROW(enumerate_schedules({{5, 5, 5, 5, 1}}), std::invalid_argument);
    EXPECT_THROW(enumerate_schedules({{25, -5, 0, 0, 0}}), std::invalid_argument);
}

TEST(Schedules, FormatParseAndSubset) {
    EXPECT_EQ(format_schedule({12, 4, 2, 2, 0}), "12-4-2-2-0");
    EXPECT_EQ(parse_schedule("12-4-2-2-0"), (ProportionTuple{12, 4, 2, 2, 0}));
    EXPECT_EQ(parse_schedule("12, 4, 2, 2, 0"), (ProportionTuple{12, 4, 2, 2, 0}));
    EXPECT_THROW(parse_schedule("1-2-3"), std::invalid_argument);
    const auto all = enumerate_schedules();
    const auto ten = spread_subset(all, 10);
    EXPECT_EQ(ten.size(), 10u);
    EXPECT_EQ(spread_subset(all, 0).size(), 270u);
    const auto pop = population_of({12, 4, 2, 2, 0});
    EXPECT_EQ(pop, (Population{{"ZIC", 12}, {"ZIP", 4}, {"GDX", 2}, {"AA", 2}}));
}

TEST(Generate, WritesManifestAndFiles) {
    TempDir dir;
    const auto plan = small_plan(3, 2, 100);
    const auto m = generate(plan, dir.path(), 1);
    ASSERT_EQ(m.entries.size(), 6u);
    const auto back = read_manifest(dir / kManifestName);
    ASSERT_EQ(back.entries.size(), 6u);
    for (std::size_t k = 0; k < m.entries.size(); ++k) {
        const auto& e = back.entries[k];
        EXPECT_EQ(e.seed, 100 + k);
        EXPECT_EQ(e.schedule, plan.schedules[k / 2]);
        const auto rows = load_corpus_file(back, e);
        EXPECT_EQ(rows.size(), e.rows);
        EXPECT_GT(e.rows, 0u);
        for (std::size_t i = 0; i < 5; ++i)
            if (e.schedule[i] == 0) EXPECT_EQ(e.ppt[i], 0.0) << kLegacyStrategies[i];
    }
}

TEST(Generate, DeterministicAcrossRunsAndWorkers) {
    TempDir a, b;
    const auto plan = small_plan(2, 2, 7);
    generate(plan, a.path(), 1);
    generate(plan, b.path(), 3);
    for (const auto& name : {"manifest.csv", "session_00000.csv", "session_00003.csv"})
        EXPECT_EQ(testing_support::slurp(a / name), testing_support::slurp(b / name)) << name;
}

TEST(Generate, UnwritableDirectoryFailsFirst) {
    TempDir dir;
    const auto blocker = dir / "file";
    std::ofstream(blocker) << "x";
    EXPECT_THROW(generate(small_plan(1, 1, 1), blocker / "sub"), std::exception);
}

TEST(Generate, RejectsDuplicateSchedules) {
    TempDir dir;
    GenPlan p = small_plan(1, 1, 1);
    p.schedules.push_back(p.schedules.front());
    EXPECT_THROW(generate(p, dir.path()), std::invalid_argument);
}

TEST(NormStatsFromCorpus, PermutationInvariantAndTimeBounded) {
    TempDir dir;
    const auto m = generate(small_plan(3, 1, 11), dir.path(), 1);
    const auto s = fit_norm_stats(m);
    Manifest reversed = m;
    std::reverse(reversed.entries.begin(), reversed.entries.end());
    EXPECT_EQ(fit_norm_stats(reversed), s);
    EXPECT_GE(s.min[0], 0.0);
    EXPECT_LE(s.max[0], 300.0);
    Manifest empty;
    EXPECT_THROW(fit_norm_stats(empty), std::invalid_argument);
}

TEST(Manifest, ParseErrorsCarryLine) {
    TempDir dir;
    std::ofstream(dir / "m.csv") << kManifestHeader << "\nsession_0.csv,12,1,20-0-0-0-0,1,0,0,0\n";
    try {
        read_manifest(dir / "m.csv");
        FAIL();
    } catch (const util::ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}
